#include "pqfed/ldp.hpp"

#include <cmath>

#include "pqfed/csv.hpp"
#include "pqfed/error.hpp"
#include "pqfed/rng.hpp"

namespace pqfed {

LdpConfig LdpConfig::no_noise(uint64_t seed) {
  LdpConfig cfg;
  cfg.noiseless = true;
  cfg.seed = seed;
  return cfg;
}

LdpConfig LdpConfig::with_epsilon(double epsilon, uint64_t seed) {
  if (!std::isfinite(epsilon) || epsilon <= 0.0) {
    throw ValidationError("epsilon must be finite and positive, got " + format_double(epsilon) +
                          " (use the no-noise flag for the noiseless case)");
  }
  LdpConfig cfg;
  cfg.noiseless = false;
  cfg.epsilon = epsilon;
  cfg.seed = seed;
  return cfg;
}

LdpConfig LdpConfig::reseeded(uint64_t new_seed) const {
  LdpConfig cfg = *this;
  cfg.seed = new_seed;
  return cfg;
}

SensitivityVector sensitivity_l1(const Matrix& features) {
  if (features.rows() == 0) throw PreconditionError("sensitivity of an empty matrix");
  SensitivityVector s;
  s.per_coordinate = features.colwise().maxCoeff() - features.colwise().minCoeff();
  return s;
}

SensitivityVector sensitivity_l1_global(const Matrix& features) {
  if (features.rows() == 0) throw PreconditionError("sensitivity of an empty matrix");
  double best = 0.0;
  for (Eigen::Index a = 0; a < features.rows(); ++a) {
    for (Eigen::Index b = a + 1; b < features.rows(); ++b) {
      best = std::max(best, (features.row(a) - features.row(b)).cwiseAbs().sum());
    }
  }
  SensitivityVector s;
  s.per_coordinate = Vector::Constant(features.cols(), best);
  return s;
}

Matrix add_laplace_noise(const Matrix& features, const SensitivityVector& sens,
                         const LdpConfig& cfg) {
  if (sens.per_coordinate.size() != features.cols()) {
    throw ShapeError("sensitivity has " + std::to_string(sens.per_coordinate.size()) +
                     " entries, features have " + std::to_string(features.cols()) + " columns");
  }
  for (Eigen::Index j = 0; j < sens.per_coordinate.size(); ++j) {
    if (sens.per_coordinate(j) < 0.0) {
      throw ValidationError("negative sensitivity at coordinate " + std::to_string(j));
    }
  }
  if (cfg.noiseless) return features;
  if (!(cfg.epsilon > 0.0)) throw ValidationError("epsilon must be positive");

  Matrix out = features;
  Rng rng(cfg.seed);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      const double s = sens.per_coordinate(j);
      if (s == 0.0) continue;
      out(i, j) += rng.laplace(s / cfg.epsilon);
    }
  }
  return out;
}

}  // namespace pqfed
