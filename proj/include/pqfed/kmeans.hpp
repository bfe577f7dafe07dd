#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pqfed/dataset.hpp"

namespace pqfed {

/// K centroids plus their pairwise Euclidean distances (the EMD ground
/// distance) and the final within-cluster sum of squares.
struct ClusterModel {
  Matrix centroids;        // k x dim
  Matrix ground_distance;  // k x k, symmetric, zero diagonal
  double inertia = 0.0;

  int k() const { return static_cast<int>(centroids.rows()); }
  int dim() const { return static_cast<int>(centroids.cols()); }
};

/// Per-client probability vector over the K clusters.
struct ClusterHistogram {
  Vector weights;

  int k() const { return static_cast<int>(weights.size()); }
};

/// Lloyd's algorithm with k-means++ seeding. Runs to an assignment fixpoint,
/// a relative inertia improvement below `tol`, or max_iter. Empty clusters are
/// re-seeded to the point farthest from its current centroid.
ClusterModel kmeans_fit(const Matrix& data, int k, int max_iter, uint64_t seed,
                        double tol = 1e-6);

/// Nearest-centroid id per row; ties go to the lowest cluster index.
std::vector<int> kmeans_assign(const ClusterModel& model, const Matrix& features);

/// Normalized cluster occupancy of `features` under `model`.
ClusterHistogram assign_histogram(const ClusterModel& model, const Matrix& features);

void save_cluster_model(const ClusterModel& model, const std::filesystem::path& dir);
ClusterModel load_cluster_model(const std::filesystem::path& dir);

}  // namespace pqfed
