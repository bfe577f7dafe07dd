#pragma once

#include <utility>
#include <vector>

#include "pqfed/csv.hpp"
#include "pqfed/ldp.hpp"

namespace pqfed {

/// Aggregate result of the distance-based membership-inference attack at one
/// privacy budget.
struct AttackReport {
  LdpConfig ldp;
  int rounds = 0;
  double alpha = 0.0;
  double power_mean = 0.0;
  double power_std = 0.0;
  double fpr_realized = 0.0;
  std::vector<double> per_round_power;
  std::vector<double> per_round_fpr;
};

/// Raw per-round material, dumpable for audit.
struct MiaAudit {
  std::vector<double> member_distances;   // cases: sampled members of the noisy set
  std::vector<double> heldout_distances;  // controls: points outside the noisy set
  double gamma = 0.0;
};

/// One attack round: split X in half, release a Laplace-noised copy of the
/// first half, then test whether sampled members sit unusually close to the
/// release. The decision threshold is the alpha-quantile of held-out
/// (non-member) nearest-neighbour distances, so the false-positive rate is
/// pinned at alpha; power is the fraction of members below it.
std::pair<double, double> mia_round(const Matrix& X, int n, double alpha,
                                    const LdpConfig& cfg, uint64_t round_seed,
                                    MiaAudit* audit = nullptr);

/// Repeats mia_round over independent seeded rounds for each budget.
std::vector<AttackReport> mia_power_curve(const Matrix& X, int n, double alpha,
                                          const std::vector<LdpConfig>& budgets, int rounds,
                                          uint64_t seed);

/// CSV rows `epsilon,rounds,alpha,power_mean,power_std,fpr_realized`
/// (no-noise budgets print epsilon as `inf`).
Table attack_report_table(const std::vector<AttackReport>& reports);

}  // namespace pqfed
