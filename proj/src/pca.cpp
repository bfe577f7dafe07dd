#include "pqfed/pca.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <fstream>
#include <sstream>

#include "pqfed/csv.hpp"
#include "pqfed/error.hpp"

namespace pqfed {

namespace {

/// Ascending eigenvalues/vectors of the sample covariance of `data`.
void covariance_eigs(const Matrix& data, Vector& mean, Vector& eigenvalues, Matrix& eigenvectors) {
  const Eigen::Index n = data.rows();
  mean = data.colwise().mean();
  const Matrix centered = data.rowwise() - mean.transpose();
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  if (solver.info() != Eigen::Success) {
    throw Error("eigendecomposition of the covariance failed");
  }
  eigenvalues = solver.eigenvalues();
  eigenvectors = solver.eigenvectors();
}

void fix_sign(Matrix& components) {
  for (Eigen::Index i = 0; i < components.rows(); ++i) {
    Eigen::Index arg = 0;
    double best = 0.0;
    for (Eigen::Index j = 0; j < components.cols(); ++j) {
      const double mag = std::abs(components(i, j));
      if (mag > best) {
        best = mag;
        arg = j;
      }
    }
    if (components(i, arg) < 0.0) components.row(i) = -components.row(i);
  }
}

}  // namespace

PcaModel pca_fit(const Matrix& data, int n_components) {
  const int n = static_cast<int>(data.rows());
  const int d = static_cast<int>(data.cols());
  if (n_components < 1) throw PreconditionError("n_components must be >= 1");
  if (n_components > d) {
    throw PreconditionError("n_components " + std::to_string(n_components) +
                            " exceeds data dimensionality " + std::to_string(d));
  }
  if (n <= n_components) {
    throw PreconditionError("need more than " + std::to_string(n_components) +
                            " samples, got " + std::to_string(n));
  }

  Vector mean, eigenvalues;
  Matrix eigenvectors;
  covariance_eigs(data, mean, eigenvalues, eigenvectors);

  // Eigen returns ascending order; take the top block, descending.
  PcaModel model;
  model.mean = mean;
  model.components.resize(n_components, d);
  model.explained_variance_ratio.resize(n_components);

  double total = 0.0;
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) total += std::max(eigenvalues(i), 0.0);
  const double eig_floor = std::max(eigenvalues(eigenvalues.size() - 1), 0.0) * 1e-12;

  int nonzero = 0;
  for (int i = 0; i < n_components; ++i) {
    const Eigen::Index src = eigenvalues.size() - 1 - i;
    model.components.row(i) = eigenvectors.col(src).transpose();
    const double eig = std::max(eigenvalues(src), 0.0);
    model.explained_variance_ratio(i) = total > 0.0 ? eig / total : 0.0;
    if (eig > eig_floor && eig > 0.0) ++nonzero;
  }
  model.rank_deficient = nonzero < n_components;
  fix_sign(model.components);
  return model;
}

Matrix pca_project(const PcaModel& model, const Matrix& data) {
  if (data.cols() != model.mean.size()) {
    throw ShapeError("data has " + std::to_string(data.cols()) + " columns, model expects " +
                     std::to_string(model.mean.size()));
  }
  return (data.rowwise() - model.mean.transpose()) * model.components.transpose();
}

Matrix pca_reconstruct(const PcaModel& model, const Matrix& scores) {
  if (scores.cols() != model.components.rows()) {
    throw ShapeError("scores have " + std::to_string(scores.cols()) +
                     " columns, model has " + std::to_string(model.components.rows()) +
                     " components");
  }
  return (scores * model.components).rowwise() + model.mean.transpose();
}

std::vector<ElbowRow> elbow_scan(const Matrix& data, const std::vector<int>& candidates) {
  for (size_t i = 1; i < candidates.size(); ++i) {
    if (candidates[i] < candidates[i - 1]) {
      throw PreconditionError("candidates must be sorted ascending");
    }
  }
  Vector mean, eigenvalues;
  Matrix eigenvectors;
  covariance_eigs(data, mean, eigenvalues, eigenvectors);

  double total = 0.0;
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) total += std::max(eigenvalues(i), 0.0);

  std::vector<ElbowRow> rows;
  for (int k : candidates) {
    if (k < 1 || k > static_cast<int>(data.cols())) {
      throw PreconditionError("candidate k=" + std::to_string(k) + " outside [1, dim]");
    }
    double cum = 0.0;
    for (int i = 0; i < k; ++i) {
      cum += std::max(eigenvalues(eigenvalues.size() - 1 - i), 0.0);
    }
    rows.push_back({k, total > 0.0 ? cum / total : 0.0});
  }
  return rows;
}

void save_pca(const PcaModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream csv;
  csv << "mean";
  for (Eigen::Index j = 0; j < model.mean.size(); ++j) csv << ',' << format_double(model.mean(j));
  csv << '\n';
  for (Eigen::Index i = 0; i < model.components.rows(); ++i) {
    csv << "component";
    for (Eigen::Index j = 0; j < model.components.cols(); ++j) {
      csv << ',' << format_double(model.components(i, j));
    }
    csv << '\n';
  }
  csv << "ratio";
  for (Eigen::Index i = 0; i < model.explained_variance_ratio.size(); ++i) {
    csv << ',' << format_double(model.explained_variance_ratio(i));
  }
  csv << '\n';
  write_text_file(dir / "pca_model.csv", csv.str());

  std::ostringstream manifest;
  manifest << "dim=" << model.dim() << '\n'
           << "n_components=" << model.n_components() << '\n'
           << "rank_deficient=" << (model.rank_deficient ? 1 : 0) << '\n';
  write_text_file(dir / "pca_manifest.txt", manifest.str());
}

PcaModel load_pca(const std::filesystem::path& dir) {
  const std::string text = read_text_file(dir / "pca_model.csv");
  std::istringstream in(text);
  std::string line;
  PcaModel model;
  std::vector<Vector> component_rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    Vector values(static_cast<Eigen::Index>(fields.size()) - 1);
    for (size_t j = 1; j < fields.size(); ++j) {
      values(static_cast<Eigen::Index>(j - 1)) = std::stod(fields[j]);
    }
    if (fields[0] == "mean") {
      model.mean = values;
    } else if (fields[0] == "component") {
      component_rows.push_back(values);
    } else if (fields[0] == "ratio") {
      model.explained_variance_ratio = values;
    } else {
      throw FormatError("unknown row tag '" + fields[0] + "' in pca_model.csv");
    }
  }
  model.components.resize(static_cast<Eigen::Index>(component_rows.size()), model.mean.size());
  for (size_t i = 0; i < component_rows.size(); ++i) {
    model.components.row(static_cast<Eigen::Index>(i)) = component_rows[i].transpose();
  }

  const std::string manifest = read_text_file(dir / "pca_manifest.txt");
  std::istringstream ms(manifest);
  while (std::getline(ms, line)) {
    const auto kv = split(line, '=');
    if (kv.size() == 2 && kv[0] == "rank_deficient") model.rank_deficient = kv[1] == "1";
  }
  return model;
}

}  // namespace pqfed
