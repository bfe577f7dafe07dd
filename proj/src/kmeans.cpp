#include "pqfed/kmeans.hpp"

#include <algorithm>
#include <cassert>
#include <limits>
#include <sstream>

#include "pqfed/csv.hpp"
#include "pqfed/error.hpp"
#include "pqfed/rng.hpp"

namespace pqfed {

namespace {

int nearest_centroid(const Matrix& centroids, const Vector& point, double* dist2_out = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c).transpose() - point).squaredNorm();
    if (d < best_d) {  // strict: ties keep the lowest index
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  if (dist2_out) *dist2_out = best_d;
  return best;
}

Matrix plusplus_init(const Matrix& data, int k, Rng& rng) {
  const int n = static_cast<int>(data.rows());
  Matrix centroids(k, data.cols());
  std::vector<bool> taken(static_cast<size_t>(n), false);

  int first = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
  centroids.row(0) = data.row(first);
  taken[static_cast<size_t>(first)] = true;

  Vector dist2(n);
  for (int i = 0; i < n; ++i) {
    dist2(i) = (data.row(i) - centroids.row(0)).squaredNorm();
  }
  for (int c = 1; c < k; ++c) {
    const double total = dist2.sum();
    int chosen = -1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double cum = 0.0;
      for (int i = 0; i < n; ++i) {
        cum += dist2(i);
        if (cum > target) {
          chosen = i;
          break;
        }
      }
      if (chosen < 0) chosen = n - 1;
    } else {
      // All remaining mass at already-chosen points (duplicates); fall back to
      // a uniform pick among untaken rows.
      std::vector<int> open;
      for (int i = 0; i < n; ++i) {
        if (!taken[static_cast<size_t>(i)]) open.push_back(i);
      }
      chosen = open.empty() ? static_cast<int>(rng.below(static_cast<uint64_t>(n)))
                            : open[static_cast<size_t>(rng.below(open.size()))];
    }
    centroids.row(c) = data.row(chosen);
    taken[static_cast<size_t>(chosen)] = true;
    for (int i = 0; i < n; ++i) {
      dist2(i) = std::min(dist2(i), (data.row(i) - centroids.row(c)).squaredNorm());
    }
  }
  return centroids;
}

}  // namespace

ClusterModel kmeans_fit(const Matrix& data, int k, int max_iter, uint64_t seed, double tol) {
  const int n = static_cast<int>(data.rows());
  if (k < 1) throw PreconditionError("k must be >= 1");
  if (n < k) {
    throw CapacityError("k-means needs at least k=" + std::to_string(k) + " rows, got " +
                        std::to_string(n));
  }

  Rng rng(seed);
  Matrix centroids = plusplus_init(data, k, rng);
  std::vector<int> assign(static_cast<size_t>(n), -1);
  double prev_inertia = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      const int c = nearest_centroid(centroids, data.row(i).transpose());
      if (c != assign[static_cast<size_t>(i)]) {
        assign[static_cast<size_t>(i)] = c;
        changed = true;
      }
    }

    Matrix sums = Matrix::Zero(k, data.cols());
    std::vector<int> counts(static_cast<size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      sums.row(assign[static_cast<size_t>(i)]) += data.row(i);
      counts[static_cast<size_t>(assign[static_cast<size_t>(i)])]++;
    }
    std::vector<bool> point_claimed(static_cast<size_t>(n), false);
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<size_t>(c)] > 0) {
        centroids.row(c) = sums.row(c) / counts[static_cast<size_t>(c)];
      }
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<size_t>(c)] > 0) continue;
      // Empty cluster: move it onto the point farthest from its own centroid.
      int far_point = -1;
      double far_d = -1.0;
      for (int i = 0; i < n; ++i) {
        if (point_claimed[static_cast<size_t>(i)]) continue;
        const double d =
            (data.row(i) - centroids.row(assign[static_cast<size_t>(i)])).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far_point = i;
        }
      }
      centroids.row(c) = data.row(far_point);
      point_claimed[static_cast<size_t>(far_point)] = true;
      changed = true;
    }

    double inertia = 0.0;
    for (int i = 0; i < n; ++i) {
      double d2 = 0.0;
      assign[static_cast<size_t>(i)] = nearest_centroid(centroids, data.row(i).transpose(), &d2);
      inertia += d2;
    }
    assert(inertia <= prev_inertia * (1.0 + 1e-9) + 1e-12);

    if (!changed) break;
    if (prev_inertia < std::numeric_limits<double>::infinity() &&
        prev_inertia - inertia < tol * std::max(prev_inertia, 1e-300)) {
      prev_inertia = inertia;
      break;
    }
    prev_inertia = inertia;
  }

  ClusterModel model;
  model.centroids = centroids;
  double inertia = 0.0;
  for (int i = 0; i < n; ++i) {
    double d2 = 0.0;
    nearest_centroid(centroids, data.row(i).transpose(), &d2);
    inertia += d2;
  }
  model.inertia = inertia;
  model.ground_distance.resize(k, k);
  for (int a = 0; a < k; ++a) {
    model.ground_distance(a, a) = 0.0;
    for (int b = a + 1; b < k; ++b) {
      const double d = (centroids.row(a) - centroids.row(b)).norm();
      model.ground_distance(a, b) = d;
      model.ground_distance(b, a) = d;
    }
  }
  return model;
}

std::vector<int> kmeans_assign(const ClusterModel& model, const Matrix& features) {
  if (features.cols() != model.centroids.cols()) {
    throw ShapeError("features have " + std::to_string(features.cols()) +
                     " columns, centroids have " + std::to_string(model.centroids.cols()));
  }
  std::vector<int> out(static_cast<size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    out[static_cast<size_t>(i)] = nearest_centroid(model.centroids, features.row(i).transpose());
  }
  return out;
}

ClusterHistogram assign_histogram(const ClusterModel& model, const Matrix& features) {
  if (features.rows() == 0) throw PreconditionError("histogram of an empty feature matrix");
  const std::vector<int> assign = kmeans_assign(model, features);
  ClusterHistogram hist;
  hist.weights = Vector::Zero(model.k());
  for (int a : assign) hist.weights(a) += 1.0;
  hist.weights /= static_cast<double>(features.rows());
  return hist;
}

void save_cluster_model(const ClusterModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream csv;
  for (Eigen::Index i = 0; i < model.centroids.rows(); ++i) {
    csv << "centroid";
    for (Eigen::Index j = 0; j < model.centroids.cols(); ++j) {
      csv << ',' << format_double(model.centroids(i, j));
    }
    csv << '\n';
  }
  csv << "inertia," << format_double(model.inertia) << '\n';
  write_text_file(dir / "cluster_model.csv", csv.str());
}

ClusterModel load_cluster_model(const std::filesystem::path& dir) {
  const std::string text = read_text_file(dir / "cluster_model.csv");
  std::istringstream in(text);
  std::string line;
  std::vector<Vector> rows;
  double inertia = 0.0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields[0] == "centroid") {
      Vector v(static_cast<Eigen::Index>(fields.size()) - 1);
      for (size_t j = 1; j < fields.size(); ++j) {
        v(static_cast<Eigen::Index>(j - 1)) = std::stod(fields[j]);
      }
      rows.push_back(v);
    } else if (fields[0] == "inertia") {
      inertia = std::stod(fields[1]);
    }
  }
  if (rows.empty()) throw FormatError("cluster_model.csv has no centroid rows");
  ClusterModel model;
  model.centroids.resize(static_cast<Eigen::Index>(rows.size()), rows[0].size());
  for (size_t i = 0; i < rows.size(); ++i) {
    model.centroids.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  }
  model.inertia = inertia;
  const int k = model.k();
  model.ground_distance.resize(k, k);
  for (int a = 0; a < k; ++a) {
    model.ground_distance(a, a) = 0.0;
    for (int b = a + 1; b < k; ++b) {
      const double d = (model.centroids.row(a) - model.centroids.row(b)).norm();
      model.ground_distance(a, b) = d;
      model.ground_distance(b, a) = d;
    }
  }
  return model;
}

}  // namespace pqfed
