#pragma once

#include <filesystem>
#include <vector>

#include "pqfed/dataset.hpp"

namespace pqfed {

/// Shared projection anchor: column mean, orthonormal component rows ordered
/// by decreasing eigenvalue, and per-component explained variance ratios.
struct PcaModel {
  Vector mean;
  Matrix components;  // n_components x dim, rows orthonormal
  Vector explained_variance_ratio;
  bool rank_deficient = false;  // fewer nonzero eigenvalues than components

  int dim() const { return static_cast<int>(mean.size()); }
  int n_components() const { return static_cast<int>(components.rows()); }
};

/// Fits on the sample covariance (1/(n-1) estimator). Components carry a
/// deterministic sign: the largest-magnitude coordinate of each is positive.
PcaModel pca_fit(const Matrix& data, int n_components);

/// (x - mean) projected onto the component rows; output is n x n_components.
Matrix pca_project(const PcaModel& model, const Matrix& data);

/// scores * components + mean.
Matrix pca_reconstruct(const PcaModel& model, const Matrix& scores);

struct ElbowRow {
  int k;
  double cumulative_ratio;
};

/// Cumulative explained variance at each candidate component count. Emits the
/// table only; choosing k stays a config decision.
std::vector<ElbowRow> elbow_scan(const Matrix& data, const std::vector<int>& candidates);

void save_pca(const PcaModel& model, const std::filesystem::path& dir);
PcaModel load_pca(const std::filesystem::path& dir);

}  // namespace pqfed
