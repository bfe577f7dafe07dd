#include "pqfed/mia.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "pqfed/csv.hpp"
#include "pqfed/error.hpp"
#include "pqfed/rng.hpp"

namespace pqfed {

namespace {

double min_distance_to(const Matrix& reference, const Vector& point) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < reference.rows(); ++i) {
    const double d = (reference.row(i).transpose() - point).norm();
    if (d < best) best = d;
  }
  return best;
}

}  // namespace

std::pair<double, double> mia_round(const Matrix& X, int n, double alpha,
                                    const LdpConfig& cfg, uint64_t round_seed,
                                    MiaAudit* audit) {
  if (X.rows() < 4) throw PreconditionError("attack needs at least 4 rows");
  if (n < 1) throw PreconditionError("n must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw PreconditionError("alpha must lie in (0,1)");

  Rng rng(derive_seed(cfg.seed, round_seed));

  // Equal halves: the reference set A (to be noised and released) and the
  // held-out set B. An odd leftover row is dropped.
  const int half = static_cast<int>(X.rows()) / 2;
  std::vector<int> perm(static_cast<size_t>(X.rows()));
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
  rng.shuffle(perm);

  Matrix reference(half, X.cols());
  Matrix heldout(half, X.cols());
  for (int i = 0; i < half; ++i) {
    reference.row(i) = X.row(perm[static_cast<size_t>(i)]);
    heldout.row(i) = X.row(perm[static_cast<size_t>(half + i)]);
  }

  const int n_eff = std::min(n, half);
  if (n > half) {
    std::cerr << "warning: attack sample size clamped from " << n << " to " << n_eff << "\n";
  }
  const std::vector<int> member_rows = rng.sample_indices(half, n_eff);
  const std::vector<int> heldout_rows = rng.sample_indices(half, n_eff);

  const SensitivityVector sens = sensitivity_l1(reference);
  const Matrix released = add_laplace_noise(reference, sens, cfg.reseeded(rng.next_u64()));

  std::vector<double> member_d, heldout_d;
  member_d.reserve(static_cast<size_t>(n_eff));
  heldout_d.reserve(static_cast<size_t>(n_eff));
  for (int idx : member_rows) {
    member_d.push_back(min_distance_to(released, reference.row(idx).transpose()));
  }
  for (int idx : heldout_rows) {
    heldout_d.push_back(min_distance_to(released, heldout.row(idx).transpose()));
  }

  // gamma: smallest value with Pr(d_heldout <= gamma) = alpha, made exact for
  // finite samples as the ceil(alpha*m)-th smallest held-out distance.
  std::vector<double> sorted = heldout_d;
  std::sort(sorted.begin(), sorted.end());
  const int k = std::max(1, static_cast<int>(std::ceil(alpha * n_eff - 1e-12)));
  const double gamma = sorted[static_cast<size_t>(k - 1)];

  int hits = 0;
  for (double d : member_d) {
    if (d <= gamma) ++hits;
  }
  int false_hits = 0;
  for (double d : heldout_d) {
    if (d <= gamma) ++false_hits;
  }
  const double power = static_cast<double>(hits) / n_eff;
  const double fpr = static_cast<double>(false_hits) / n_eff;

  if (audit) {
    audit->member_distances = member_d;
    audit->heldout_distances = heldout_d;
    audit->gamma = gamma;
  }
  return {power, fpr};
}

std::vector<AttackReport> mia_power_curve(const Matrix& X, int n, double alpha,
                                          const std::vector<LdpConfig>& budgets, int rounds,
                                          uint64_t seed) {
  if (rounds < 1) throw PreconditionError("rounds must be >= 1");
  std::vector<AttackReport> reports;
  for (size_t e = 0; e < budgets.size(); ++e) {
    AttackReport report;
    report.ldp = budgets[e].reseeded(derive_seed(seed, "mia-eps", e));
    report.rounds = rounds;
    report.alpha = alpha;
    for (int r = 0; r < rounds; ++r) {
      const auto [power, fpr] = mia_round(X, n, alpha, report.ldp, static_cast<uint64_t>(r));
      report.per_round_power.push_back(power);
      report.per_round_fpr.push_back(fpr);
    }
    double mean = 0.0, fmean = 0.0;
    for (int r = 0; r < rounds; ++r) {
      mean += report.per_round_power[static_cast<size_t>(r)];
      fmean += report.per_round_fpr[static_cast<size_t>(r)];
    }
    mean /= rounds;
    fmean /= rounds;
    double var = 0.0;
    for (double p : report.per_round_power) var += (p - mean) * (p - mean);
    report.power_mean = mean;
    report.power_std = rounds > 1 ? std::sqrt(var / (rounds - 1)) : 0.0;
    report.fpr_realized = fmean;
    reports.push_back(std::move(report));
  }
  return reports;
}

Table attack_report_table(const std::vector<AttackReport>& reports) {
  Table t;
  t.columns = {"epsilon", "rounds", "alpha", "power_mean", "power_std", "fpr_realized"};
  for (const auto& r : reports) {
    t.rows.push_back({r.ldp.noiseless ? "inf" : format_double(r.ldp.epsilon),
                      std::to_string(r.rounds), format_double(r.alpha),
                      format_double(r.power_mean), format_double(r.power_std),
                      format_double(r.fpr_realized)});
  }
  return t;
}

}  // namespace pqfed
