#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "pqfed/dataset.hpp"
#include "pqfed/error.hpp"
#include "pqfed/pca.hpp"
#include "pqfed/rng.hpp"

using namespace pqfed;

namespace {

// Brute-force cyclic Jacobi eigensolver; the independent oracle for the
// covariance eigendecomposition on small matrices.
void jacobi_eigensolve(Matrix a, Vector& eigenvalues, Matrix& eigenvectors) {
  const int n = static_cast<int>(a.rows());
  eigenvectors = Matrix::Identity(n, n);
  for (int sweep = 0; sweep < 200; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (off < 1e-24) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        Matrix rot = Matrix::Identity(n, n);
        rot(p, p) = c;
        rot(q, q) = c;
        rot(p, q) = s;
        rot(q, p) = -s;
        a = rot.transpose() * a * rot;
        eigenvectors = eigenvectors * rot;
      }
    }
  }
  eigenvalues = a.diagonal();
}

Matrix covariance_of(const Matrix& data) {
  const Vector mean = data.colwise().mean();
  const Matrix centered = data.rowwise() - mean.transpose();
  return centered.transpose() * centered / static_cast<double>(data.rows() - 1);
}

Matrix random_matrix(int rows, int cols, uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

}  // namespace

TEST_CASE("pca_fit: rank-1 data on the line y=x") {
  Matrix data(5, 2);
  for (int i = 0; i < 5; ++i) {
    data(i, 0) = i;
    data(i, 1) = i;
  }
  const PcaModel model = pca_fit(data, 2);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  CHECK(model.components(0, 0) == doctest::Approx(inv_sqrt2));
  CHECK(model.components(0, 1) == doctest::Approx(inv_sqrt2));
  CHECK(model.explained_variance_ratio(0) == doctest::Approx(1.0));
  CHECK(model.explained_variance_ratio(1) == doctest::Approx(0.0));
  CHECK(model.rank_deficient);
}

TEST_CASE("pca_fit: full basis explains all variance") {
  const Matrix data = random_matrix(40, 6, 3);
  const PcaModel model = pca_fit(data, 6);
  CHECK(model.explained_variance_ratio.sum() == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("pca_fit: ratios are non-increasing and in [0,1]") {
  const Matrix data = random_matrix(60, 8, 4);
  const PcaModel model = pca_fit(data, 8);
  for (int i = 0; i < 8; ++i) {
    CHECK(model.explained_variance_ratio(i) >= 0.0);
    CHECK(model.explained_variance_ratio(i) <= 1.0);
    if (i) CHECK(model.explained_variance_ratio(i) <= model.explained_variance_ratio(i - 1) + 1e-12);
  }
}

TEST_CASE("pca_fit: components are orthonormal") {
  const SyntheticData data = generate_synthetic(5, 12, 30, 1.0, 8);
  const PcaModel model = pca_fit(data.features, 6);
  const Matrix gram = model.components * model.components.transpose();
  CHECK((gram - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("pca_fit: more components means lower reconstruction error") {
  const SyntheticData pool = generate_synthetic(15, 60, 40, 1.0, 42);
  const PcaModel wide = pca_fit(pool.features, 50);
  const PcaModel narrow = pca_fit(pool.features, 10);
  const double err_wide =
      (pca_reconstruct(wide, pca_project(wide, pool.features)) - pool.features).squaredNorm();
  const double err_narrow =
      (pca_reconstruct(narrow, pca_project(narrow, pool.features)) - pool.features).squaredNorm();
  CHECK(err_wide < err_narrow);
}

TEST_CASE("pca_fit: rank-deficient fit pads with orthonormal completion") {
  // 3 distinct points in 5-d span at most a 2-d subspace.
  Matrix data = random_matrix(3, 5, 6);
  Matrix tall(6, 5);
  tall << data, data;  // duplicated rows keep rank <= 2
  const PcaModel padded = pca_fit(tall, 4);
  CHECK(padded.rank_deficient);
  const Matrix gram = padded.components * padded.components.transpose();
  CHECK((gram - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(padded.explained_variance_ratio(3) == doctest::Approx(0.0));
}

TEST_CASE("pca_fit: preconditions") {
  const Matrix data = random_matrix(5, 4, 1);
  CHECK_THROWS_AS(pca_fit(data, 5), PreconditionError);  // n_components > d
  CHECK_THROWS_AS(pca_fit(data, 0), PreconditionError);
  const Matrix tiny = random_matrix(3, 4, 1);
  CHECK_THROWS_AS(pca_fit(tiny, 3), PreconditionError);  // |data| must exceed n_components
}

TEST_CASE("pca_project: the mean maps to the zero row") {
  const Matrix data = random_matrix(30, 5, 9);
  const PcaModel model = pca_fit(data, 3);
  Matrix mean_row(1, 5);
  mean_row.row(0) = model.mean.transpose();
  const Matrix projected = pca_project(model, mean_row);
  CHECK(projected.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("pca_project: project-then-reconstruct is the identity on full rank") {
  const Matrix data = random_matrix(25, 4, 10);
  const PcaModel model = pca_fit(data, 4);
  const Matrix back = pca_reconstruct(model, pca_project(model, data));
  CHECK((back - data).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("pca_project: dimension mismatch throws") {
  const Matrix data = random_matrix(20, 4, 2);
  const PcaModel model = pca_fit(data, 2);
  CHECK_THROWS_AS(pca_project(model, random_matrix(5, 7, 3)), ShapeError);
}

TEST_CASE("pca_project: score variances match the covariance eigenvalues") {
  const Matrix data = random_matrix(200, 6, 12);
  const PcaModel model = pca_fit(data, 6);
  const Matrix scores = pca_project(model, data);

  Vector eigenvalues;
  Matrix eigenvectors;
  jacobi_eigensolve(covariance_of(data), eigenvalues, eigenvectors);
  std::vector<double> sorted(eigenvalues.data(), eigenvalues.data() + eigenvalues.size());
  std::sort(sorted.rbegin(), sorted.rend());

  for (int j = 0; j < 6; ++j) {
    const Vector col = scores.col(j);
    const double var = (col.array() - col.mean()).square().sum() / (scores.rows() - 1);
    CHECK(var == doctest::Approx(sorted[static_cast<size_t>(j)]).epsilon(1e-6));
  }
}

TEST_CASE("pca_fit matches the Jacobi oracle up to sign on small matrices") {
  for (uint64_t seed : {21, 22, 23}) {
    const int d = 3 + static_cast<int>(seed % 7);
    const Matrix data = random_matrix(50, d, seed);
    const PcaModel model = pca_fit(data, d);

    Vector eigenvalues;
    Matrix eigenvectors;
    jacobi_eigensolve(covariance_of(data), eigenvalues, eigenvectors);

    // Pair oracle vectors with model components by descending eigenvalue.
    std::vector<int> order(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i) order[static_cast<size_t>(i)] = i;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return eigenvalues(a) > eigenvalues(b); });
    for (int i = 0; i < d; ++i) {
      const Vector oracle = eigenvectors.col(order[static_cast<size_t>(i)]);
      const double dot = std::abs(model.components.row(i) * oracle);
      CHECK(dot == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("pca_project is linear once the mean term is accounted for") {
  const Matrix data = random_matrix(30, 5, 30);
  const PcaModel model = pca_fit(data, 3);
  Matrix x = random_matrix(4, 5, 32);
  Matrix y = random_matrix(4, 5, 33);
  const double a = 0.7, b = -1.3;
  const Matrix lhs = pca_project(model, (a * x + b * y).eval());
  const Matrix rhs = a * pca_project(model, x) + b * pca_project(model, y) +
                     (1.0 - a - b) * pca_project(model, Matrix::Zero(4, 5));
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("elbow_scan: full dimensionality reaches 1.0") {
  const Matrix data = random_matrix(40, 5, 40);
  const auto rows = elbow_scan(data, {5});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].cumulative_ratio == doctest::Approx(1.0));
}

TEST_CASE("elbow_scan: rank-1 data saturates at every k") {
  Matrix data(10, 3);
  for (int i = 0; i < 10; ++i) {
    data(i, 0) = i;
    data(i, 1) = 2.0 * i;
    data(i, 2) = -static_cast<double>(i);
  }
  for (const auto& row : elbow_scan(data, {1, 2, 3})) {
    CHECK(row.cumulative_ratio == doctest::Approx(1.0));
  }
}

TEST_CASE("elbow_scan: cumulative variance is non-decreasing") {
  const SyntheticData pool = generate_synthetic(15, 50, 30, 1.0, 50);
  const auto rows = elbow_scan(pool.features, {5, 15, 50});
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].cumulative_ratio <= rows[1].cumulative_ratio + 1e-12);
  CHECK(rows[1].cumulative_ratio <= rows[2].cumulative_ratio + 1e-12);
}

TEST_CASE("elbow_scan: unsorted candidates are rejected") {
  const Matrix data = random_matrix(20, 4, 60);
  CHECK_THROWS_AS(elbow_scan(data, {3, 1}), PreconditionError);
}

TEST_CASE("pca save/load round-trips the model") {
  const Matrix data = random_matrix(30, 6, 70);
  const PcaModel model = pca_fit(data, 4);
  const auto dir = std::filesystem::temp_directory_path() / "pqfed_pca_bundle";
  save_pca(model, dir);
  const PcaModel back = load_pca(dir);
  CHECK((back.mean - model.mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.components - model.components).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.explained_variance_ratio - model.explained_variance_ratio).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK(back.rank_deficient == model.rank_deficient);
}
