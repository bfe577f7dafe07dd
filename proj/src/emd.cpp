#include "pqfed/emd.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "pqfed/error.hpp"

namespace pqfed {

namespace {

// Transportation simplex on the bipartite problem: m supply bins, n demand
// bins, every (i, j) arc available. The basis is always a spanning tree with
// m + n - 1 arcs (some possibly carrying zero flow). Bland's rule on both the
// entering and the leaving arc prevents cycling through degenerate pivots.
class TransportSimplex {
 public:
  TransportSimplex(const Vector& supply, const Vector& demand, const Matrix& cost)
      : m_(static_cast<int>(supply.size())),
        n_(static_cast<int>(demand.size())),
        cost_(cost),
        flow_(Matrix::Zero(supply.size(), demand.size())),
        basic_(static_cast<size_t>(m_ * n_), false) {
    northwest_corner(supply, demand);
    double scale = 1.0;
    for (Eigen::Index i = 0; i < cost.rows(); ++i) {
      for (Eigen::Index j = 0; j < cost.cols(); ++j) scale = std::max(scale, std::abs(cost(i, j)));
    }
    tolerance_ = 1e-12 * scale;
  }

  TransportPlan solve() {
    const int max_pivots = 64 * (m_ + n_) * (m_ + n_);
    for (int pivot = 0; pivot < max_pivots; ++pivot) {
      compute_duals();
      const auto [ei, ej] = entering_arc();
      if (ei < 0) {
        TransportPlan plan;
        plan.flow = flow_;
        plan.cost = 0.0;
        for (int i = 0; i < m_; ++i) {
          for (int j = 0; j < n_; ++j) plan.cost += flow_(i, j) * cost_(i, j);
        }
        if (plan.cost < 0.0 && plan.cost > -1e-12) plan.cost = 0.0;
        return plan;
      }
      pivot_on(ei, ej);
    }
    throw Error("transportation simplex exceeded its pivot budget");
  }

 private:
  bool is_basic(int i, int j) const { return basic_[static_cast<size_t>(i * n_ + j)]; }
  void set_basic(int i, int j, bool v) { basic_[static_cast<size_t>(i * n_ + j)] = v; }

  void northwest_corner(Vector supply, Vector demand) {
    int i = 0, j = 0;
    while (true) {
      set_basic(i, j, true);
      const double f = std::min(supply(i), demand(j));
      flow_(i, j) = f;
      supply(i) -= f;
      demand(j) -= f;
      if (i == m_ - 1 && j == n_ - 1) break;
      if (j == n_ - 1) {
        ++i;
      } else if (i == m_ - 1) {
        ++j;
      } else if (supply(i) <= demand(j)) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  // Solves u_i + v_j = c_ij over the basis tree (u_0 anchored at 0).
  void compute_duals() {
    u_.assign(static_cast<size_t>(m_), std::numeric_limits<double>::quiet_NaN());
    v_.assign(static_cast<size_t>(n_), std::numeric_limits<double>::quiet_NaN());
    u_[0] = 0.0;
    std::deque<int> queue;  // rows are 0..m-1, columns are m..m+n-1
    queue.push_back(0);
    while (!queue.empty()) {
      const int node = queue.front();
      queue.pop_front();
      if (node < m_) {
        const int i = node;
        for (int j = 0; j < n_; ++j) {
          if (is_basic(i, j) && std::isnan(v_[static_cast<size_t>(j)])) {
            v_[static_cast<size_t>(j)] = cost_(i, j) - u_[static_cast<size_t>(i)];
            queue.push_back(m_ + j);
          }
        }
      } else {
        const int j = node - m_;
        for (int i = 0; i < m_; ++i) {
          if (is_basic(i, j) && std::isnan(u_[static_cast<size_t>(i)])) {
            u_[static_cast<size_t>(i)] = cost_(i, j) - v_[static_cast<size_t>(j)];
            queue.push_back(i);
          }
        }
      }
    }
  }

  // First nonbasic arc (row-major) with negative reduced cost, or (-1, -1).
  std::pair<int, int> entering_arc() const {
    for (int i = 0; i < m_; ++i) {
      for (int j = 0; j < n_; ++j) {
        if (is_basic(i, j)) continue;
        const double reduced = cost_(i, j) - u_[static_cast<size_t>(i)] - v_[static_cast<size_t>(j)];
        if (reduced < -tolerance_) return {i, j};
      }
    }
    return {-1, -1};
  }

  // The unique basis-tree path from row node `si` to column node `m_ + sj`.
  std::vector<int> tree_path(int si, int sj) const {
    const int nodes = m_ + n_;
    std::vector<int> parent(static_cast<size_t>(nodes), -2);
    std::deque<int> queue;
    parent[static_cast<size_t>(si)] = -1;
    queue.push_back(si);
    while (!queue.empty()) {
      const int node = queue.front();
      queue.pop_front();
      if (node == m_ + sj) break;
      if (node < m_) {
        for (int j = 0; j < n_; ++j) {
          if (is_basic(node, j) && parent[static_cast<size_t>(m_ + j)] == -2) {
            parent[static_cast<size_t>(m_ + j)] = node;
            queue.push_back(m_ + j);
          }
        }
      } else {
        const int j = node - m_;
        for (int i = 0; i < m_; ++i) {
          if (is_basic(i, j) && parent[static_cast<size_t>(i)] == -2) {
            parent[static_cast<size_t>(i)] = m_ + j;
            queue.push_back(i);
          }
        }
      }
    }
    std::vector<int> path;
    for (int node = m_ + sj; node != -1; node = parent[static_cast<size_t>(node)]) {
      path.push_back(node);
    }
    std::reverse(path.begin(), path.end());  // si ... m_+sj
    return path;
  }

  void pivot_on(int ei, int ej) {
    // Cycle = entering arc + tree path from its column back to its row.
    // Walking the path from the row end, arcs alternate +delta / -delta with
    // the entering arc taking +delta.
    const std::vector<int> path = tree_path(ei, ej);
    std::vector<std::pair<int, int>> minus_arcs, plus_arcs;
    plus_arcs.push_back({ei, ej});
    for (size_t s = 0; s + 1 < path.size(); ++s) {
      const int a = path[s], b = path[s + 1];
      const int i = a < m_ ? a : b;
      const int j = a < m_ ? b - m_ : a - m_;
      if (s % 2 == 0) {
        minus_arcs.push_back({i, j});  // adjacent to the entering row: flow drops
      } else {
        plus_arcs.push_back({i, j});
      }
    }

    double delta = std::numeric_limits<double>::infinity();
    std::pair<int, int> leaving{-1, -1};
    for (const auto& [i, j] : minus_arcs) {
      const double f = flow_(i, j);
      if (f < delta - 1e-15 ||
          (std::abs(f - delta) <= 1e-15 &&
           (leaving.first < 0 || std::make_pair(i, j) < leaving))) {
        delta = std::min(delta, f);
        leaving = {i, j};
      }
    }

    for (const auto& [i, j] : plus_arcs) flow_(i, j) += delta;
    for (const auto& [i, j] : minus_arcs) flow_(i, j) -= delta;
    flow_(leaving.first, leaving.second) = 0.0;
    set_basic(leaving.first, leaving.second, false);
    set_basic(ei, ej, true);
  }

  int m_, n_;
  Matrix cost_;
  Matrix flow_;
  std::vector<bool> basic_;
  std::vector<double> u_, v_;
  double tolerance_ = 1e-12;
};

}  // namespace

std::pair<double, TransportPlan> emd_with_cost(const Vector& source, const Vector& target,
                                               const Matrix& ground_distance) {
  if (ground_distance.rows() != source.size() || ground_distance.cols() != target.size()) {
    throw ShapeError("ground distance is " + std::to_string(ground_distance.rows()) + "x" +
                     std::to_string(ground_distance.cols()) + ", histograms are " +
                     std::to_string(source.size()) + " and " + std::to_string(target.size()));
  }
  for (Eigen::Index i = 0; i < source.size(); ++i) {
    if (source(i) < 0.0) throw ValidationError("negative source weight");
  }
  for (Eigen::Index j = 0; j < target.size(); ++j) {
    if (target(j) < 0.0) throw ValidationError("negative target weight");
  }
  const double sp = source.sum(), sq = target.sum();
  if (std::abs(sp - sq) > 1e-6 * std::max({sp, sq, 1.0})) {
    throw PreconditionError("histogram masses differ: " + std::to_string(sp) + " vs " +
                            std::to_string(sq));
  }
  // Remove the residual mass imbalance so the simplex sees an exactly
  // balanced problem.
  Vector q = target;
  if (sq > 0.0) q *= sp / sq;

  TransportSimplex simplex(source, q, ground_distance);
  TransportPlan plan = simplex.solve();
  return {plan.cost, plan};
}

std::pair<double, TransportPlan> emd(const ClusterHistogram& p, const ClusterHistogram& q,
                                     const ClusterModel& model) {
  if (p.k() != model.k() || q.k() != model.k()) {
    throw ShapeError("histogram size does not match the cluster model (" +
                     std::to_string(p.k()) + ", " + std::to_string(q.k()) + " vs K=" +
                     std::to_string(model.k()) + ")");
  }
  return emd_with_cost(p.weights, q.weights, model.ground_distance);
}

std::vector<std::pair<std::string, double>> client_distances(
    const ClusterHistogram& target,
    const std::vector<std::pair<std::string, ClusterHistogram>>& peers,
    const ClusterModel& model) {
  std::vector<std::pair<std::string, double>> out;
  out.reserve(peers.size());
  for (const auto& [id, hist] : peers) {
    out.push_back({id, emd(target, hist, model).first});
  }
  return out;
}

}  // namespace pqfed
