#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pqfed/kmeans.hpp"

namespace pqfed {

/// Optimal transport plan between two histograms: flow matrix plus its cost.
struct TransportPlan {
  Matrix flow;  // flow(i, j) = mass moved from source bin i to target bin j
  double cost = 0.0;
};

/// Exact Earth Mover's Distance over an explicit ground-distance matrix,
/// solved with the transportation simplex. Both weight vectors must be
/// non-negative with equal totals.
std::pair<double, TransportPlan> emd_with_cost(const Vector& source, const Vector& target,
                                               const Matrix& ground_distance);

/// EMD between two cluster histograms under the model's centroid distances.
std::pair<double, TransportPlan> emd(const ClusterHistogram& p, const ClusterHistogram& q,
                                     const ClusterModel& model);

/// EMD of each peer histogram to the target, order-preserving.
std::vector<std::pair<std::string, double>> client_distances(
    const ClusterHistogram& target,
    const std::vector<std::pair<std::string, ClusterHistogram>>& peers,
    const ClusterModel& model);

}  // namespace pqfed
