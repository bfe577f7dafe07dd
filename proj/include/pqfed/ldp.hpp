#pragma once

#include <cstdint>

#include "pqfed/dataset.hpp"

namespace pqfed {

/// Privacy budget for the Laplace mechanism. The no-noise case is a distinct
/// flag, never an infinite float.
struct LdpConfig {
  bool noiseless = false;
  double epsilon = 0.0;  // meaningful only when !noiseless
  uint64_t seed = 0;

  static LdpConfig no_noise(uint64_t seed = 0);
  static LdpConfig with_epsilon(double epsilon, uint64_t seed);

  LdpConfig reseeded(uint64_t new_seed) const;
};

/// Coordinate-wise range of a feature matrix; sets per-coordinate noise scale.
struct SensitivityVector {
  Vector per_coordinate;

  int size() const { return static_cast<int>(per_coordinate.size()); }
};

/// s_j = max_i x[i][j] - min_i x[i][j].
SensitivityVector sensitivity_l1(const Matrix& features);

/// Alternative scalar form: the largest pairwise l1 distance between rows,
/// applied uniformly to every coordinate. Exposed for comparison runs only.
SensitivityVector sensitivity_l1_global(const Matrix& features);

/// Adds independent Laplace(0, s_j/epsilon) noise per entry, inverse-CDF
/// sampled from cfg.seed. Zero-sensitivity coordinates pass through untouched;
/// the no-noise flag returns the input bitwise.
Matrix add_laplace_noise(const Matrix& features, const SensitivityVector& sens,
                         const LdpConfig& cfg);

}  // namespace pqfed
