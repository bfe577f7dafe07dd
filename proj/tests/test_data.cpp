#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "pqfed/csv.hpp"
#include "pqfed/dataset.hpp"
#include "pqfed/error.hpp"
#include "pqfed/kmeans.hpp"
#include "pqfed/rng.hpp"

using namespace pqfed;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "pqfed_test_data";
  std::filesystem::create_directories(dir);
  return dir / name;
}

void write_raw(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> idx_image_header(uint32_t count, uint32_t rows, uint32_t cols) {
  std::vector<unsigned char> b = {0, 0, 8, 3};
  for (uint32_t v : {count, rows, cols}) {
    b.push_back(static_cast<unsigned char>(v >> 24));
    b.push_back(static_cast<unsigned char>(v >> 16));
    b.push_back(static_cast<unsigned char>(v >> 8));
    b.push_back(static_cast<unsigned char>(v));
  }
  return b;
}

}  // namespace

TEST_CASE("load_idx_images: four 28x28 zero images decode to a zero matrix") {
  auto bytes = idx_image_header(4, 28, 28);
  bytes.resize(bytes.size() + 4 * 28 * 28, 0);
  const auto path = temp_file("zeros.idx");
  write_raw(path, bytes);
  const Matrix m = load_idx_images(path);
  CHECK(m.rows() == 4);
  CHECK(m.cols() == 784);
  CHECK(m.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("load_idx_images: payload shorter than the header count is rejected") {
  auto bytes = idx_image_header(10, 3, 3);
  bytes.resize(bytes.size() + 9 * 9, 1);  // only 9 images of 3x3
  const auto path = temp_file("short.idx");
  write_raw(path, bytes);
  CHECK_THROWS_AS(load_idx_images(path), FormatError);
}

TEST_CASE("load_idx_images: byte 255 scales to exactly 1.0") {
  auto bytes = idx_image_header(1, 2, 2);
  bytes.insert(bytes.end(), {255, 0, 128, 0});
  const auto path = temp_file("scale.idx");
  write_raw(path, bytes);
  const Matrix m = load_idx_images(path);
  CHECK(m(0, 0) == 1.0);
  CHECK(m(0, 2) == doctest::Approx(128.0 / 255.0));
}

TEST_CASE("load_idx_images: wrong magic names offset 0") {
  std::vector<unsigned char> bytes = {0, 0, 9, 9, 0, 0, 0, 0};
  const auto path = temp_file("magic.idx");
  write_raw(path, bytes);
  try {
    load_idx_images(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("offset 0") != std::string::npos);
  }
}

TEST_CASE("idx round-trip is bitwise for byte-quantized matrices") {
  Rng rng(7);
  Matrix m(6, 9);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m(i, j) = static_cast<double>(rng.below(256)) / 255.0;
    }
  }
  const auto path = temp_file("roundtrip.idx");
  write_idx_images(path, m, 3, 3);
  const Matrix back = load_idx_images(path);
  REQUIRE(back.rows() == m.rows());
  CHECK((back - m).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("load_idx labels pair with images") {
  const auto ipath = temp_file("pair_images.idx");
  const auto lpath = temp_file("pair_labels.idx");
  auto bytes = idx_image_header(2, 2, 2);
  bytes.resize(bytes.size() + 8, 3);
  write_raw(ipath, bytes);
  write_idx_labels(lpath, {4, 9});
  const LabeledData data = load_idx(ipath, lpath);
  CHECK(data.labels == std::vector<int>{4, 9});
}

TEST_CASE("load_cifar_binary: empty file gives an empty 0x3072 matrix") {
  const auto path = temp_file("empty.bin");
  write_raw(path, {});
  const LabeledData data = load_cifar_binary(path);
  CHECK(data.features.rows() == 0);
  CHECK(data.features.cols() == 3072);
  CHECK(data.labels.empty());
}

TEST_CASE("load_cifar_binary: one zero record with label 3") {
  std::vector<unsigned char> bytes(3073, 0);
  bytes[0] = 3;
  const auto path = temp_file("one.bin");
  write_raw(path, bytes);
  const LabeledData data = load_cifar_binary(path);
  CHECK(data.labels == std::vector<int>{3});
  CHECK(data.features.row(0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("load_cifar_binary: 3074 bytes is a format error") {
  std::vector<unsigned char> bytes(3074, 0);
  const auto path = temp_file("badlen.bin");
  write_raw(path, bytes);
  CHECK_THROWS_AS(load_cifar_binary(path), FormatError);
}

TEST_CASE("load_cifar_binary: label byte above 9 is invalid") {
  std::vector<unsigned char> bytes(3073, 0);
  bytes[0] = 10;
  const auto path = temp_file("badlabel.bin");
  write_raw(path, bytes);
  CHECK_THROWS_AS(load_cifar_binary(path), ValidationError);
}

TEST_CASE("dataset csv round-trips through the synthetic schema") {
  const SyntheticData synth = generate_synthetic(3, 4, 5, 0.5, 11);
  LabeledData data{synth.features, synth.labels};
  const auto path = temp_file("synth.csv");
  write_dataset_csv(path, data);
  const LabeledData back = load_dataset_csv(path);
  CHECK(back.labels == data.labels);
  CHECK((back.features - data.features).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("generate_synthetic: same seed gives bitwise-identical output") {
  const SyntheticData a = generate_synthetic(4, 6, 10, 1.5, 99);
  const SyntheticData b = generate_synthetic(4, 6, 10, 1.5, 99);
  CHECK((a.features - b.features).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.true_cluster_ids == b.true_cluster_ids);
}

TEST_CASE("generate_synthetic: 15 clusters all materialize") {
  const SyntheticData data = generate_synthetic(15, 50, 20, 1.0, 5);
  std::set<int> seen(data.true_cluster_ids.begin(), data.true_cluster_ids.end());
  CHECK(seen.size() == 15);
}

TEST_CASE("generate_synthetic: degenerate blobs are exactly recoverable by k-means") {
  const SyntheticData data = generate_synthetic(3, 5, 30, 1e-9, 21);
  const ClusterModel model = kmeans_fit(data.features, 3, 100, 17);
  const std::vector<int> assign = kmeans_assign(model, data.features);
  // Same generating blob => same recovered cluster, across all pairs.
  for (size_t i = 0; i < assign.size(); ++i) {
    for (size_t j = i + 1; j < assign.size(); ++j) {
      const bool same_truth = data.true_cluster_ids[i] == data.true_cluster_ids[j];
      const bool same_cluster = assign[i] == assign[j];
      CHECK(same_truth == same_cluster);
    }
  }
}

TEST_CASE("generate_synthetic: precondition violations throw") {
  CHECK_THROWS_AS(generate_synthetic(1, 5, 10, 1.0, 0), PreconditionError);
  CHECK_THROWS_AS(generate_synthetic(3, 1, 10, 1.0, 0), PreconditionError);
  CHECK_THROWS_AS(generate_synthetic(3, 5, 10, 0.0, 0), PreconditionError);
}

namespace {

/// Pool with one spare cluster: clusters 0..3, 160 rows each.
struct PoolFixture {
  LabeledData pool;
  std::vector<int> assignments;
  PartitionPlan plan;

  PoolFixture() {
    const SyntheticData data = generate_synthetic(4, 6, 160, 0.8, 123);
    pool = {data.features, data.labels};
    assignments = data.true_cluster_ids;
    plan.target_clusters = {0, 1, 2};
    plan.per_cluster_train = 40;
    plan.test_size = 30;
    plan.seed = 77;
  }
};

}  // namespace

TEST_CASE("build_target_client: 3 x per_cluster_train with equal test thirds") {
  PoolFixture f;
  f.plan.per_cluster_train = 400 / 10;  // desk-scale equivalent of the 400 draw
  const ClientDataset target = build_target_client(f.pool, f.assignments, f.plan);
  CHECK(target.train.size() == 3 * 40);
  CHECK(target.provenance.size() == 3);
  for (const auto& [cluster, count] : target.provenance) CHECK(count == 40);
  CHECK(target.provenance_total() == static_cast<int>(target.train.size()));
  CHECK(target.test.size() == 30);

  // Equal thirds in the test set, checked through pool cluster ids.
  std::map<int, int> test_by_cluster;
  for (int row : target.test_indices) test_by_cluster[f.assignments[(size_t)row]]++;
  for (const auto& [cluster, count] : test_by_cluster) CHECK(count == 10);

  // Train/test disjoint at pool-row level.
  std::set<int> train_rows(target.train_indices.begin(), target.train_indices.end());
  for (int row : target.test_indices) CHECK(train_rows.count(row) == 0);
}

TEST_CASE("build_target_client: insufficient cluster capacity names the cluster") {
  PoolFixture f;
  f.plan.per_cluster_train = 400;  // cluster only has 160
  try {
    build_target_client(f.pool, f.assignments, f.plan);
    FAIL("expected CapacityError");
  } catch (const CapacityError& e) {
    CHECK(std::string(e.what()).find("cluster") != std::string::npos);
  }
}

TEST_CASE("build_target_client: identical plan and seed reproduce the client") {
  PoolFixture f;
  const ClientDataset a = build_target_client(f.pool, f.assignments, f.plan);
  const ClientDataset b = build_target_client(f.pool, f.assignments, f.plan);
  CHECK(a.train_indices == b.train_indices);
  CHECK(a.test_indices == b.test_indices);
}

TEST_CASE("build_peer_client: r=0 stays inside the target clusters") {
  PoolFixture f;
  const ClientDataset peer = build_peer_client(f.pool, f.assignments, f.plan, 0.0, 1, "P1");
  CHECK(peer.train.size() == 3 * 40);
  for (const auto& [cluster, count] : peer.provenance) {
    CHECK((cluster == 0 || cluster == 1 || cluster == 2));
  }
  CHECK(peer.provenance_total() == 120);
}

TEST_CASE("build_peer_client: r=1 draws entirely outside the target clusters") {
  PoolFixture f;
  const ClientDataset peer = build_peer_client(f.pool, f.assignments, f.plan, 1.0, 2, "P2");
  CHECK(peer.train.size() == 3 * 40);
  for (int row : peer.train_indices) CHECK(f.assignments[(size_t)row] == 3);
}

TEST_CASE("build_peer_client: r=0.5 splits 20/20/20 + 60 from c_diff") {
  PoolFixture f;
  const ClientDataset peer = build_peer_client(f.pool, f.assignments, f.plan, 0.5, 3, "P3");
  REQUIRE(peer.train.size() == 120);
  std::map<int, int> by_cluster;
  for (const auto& [cluster, count] : peer.provenance) by_cluster[cluster] = count;
  CHECK(by_cluster[0] == 20);
  CHECK(by_cluster[1] == 20);
  CHECK(by_cluster[2] == 20);
  CHECK(by_cluster[3] == 60);
  CHECK(peer.provenance_total() == 120);
}

TEST_CASE("build_peer_client: floor-and-shift keeps |train| invariant at every r") {
  PoolFixture f;
  // Cluster 3 holds 160 rows; keep demand under that by shrinking the draw.
  f.plan.per_cluster_train = 30;
  for (double r : {0.0, 0.1, 0.3, 0.45, 0.7, 0.9, 1.0}) {
    const ClientDataset peer =
        build_peer_client(f.pool, f.assignments, f.plan, r, 5, "P");
    CHECK(peer.train.size() == static_cast<size_t>(3 * f.plan.per_cluster_train));
    CHECK(peer.provenance_total() == 3 * f.plan.per_cluster_train);
  }
}

TEST_CASE("build_peer_client: r=0.9 floor lands on 3 kept per cluster of 30") {
  PoolFixture f;
  f.plan.per_cluster_train = 30;
  const ClientDataset peer = build_peer_client(f.pool, f.assignments, f.plan, 0.9, 8, "P");
  std::map<int, int> by_cluster;
  for (const auto& [cluster, count] : peer.provenance) by_cluster[cluster] = count;
  CHECK(by_cluster[0] == 3);  // floor((1-0.9)*30) = 3, not 2
  CHECK(by_cluster[3] == 81);
}

TEST_CASE("build_peer_client: avoids the target client's rows when capacity allows") {
  PoolFixture f;
  f.plan.per_cluster_train = 40;
  const ClientDataset target = build_target_client(f.pool, f.assignments, f.plan);
  std::unordered_set<int> used(target.train_indices.begin(), target.train_indices.end());
  used.insert(target.test_indices.begin(), target.test_indices.end());
  const ClientDataset peer =
      build_peer_client(f.pool, f.assignments, f.plan, 0.0, 4, "P", used);
  CHECK(peer.warnings.empty());
  for (int row : peer.train_indices) CHECK(used.count(row) == 0);
}

TEST_CASE("build_peer_client: falls back with a warning when exclusion starves a cluster") {
  PoolFixture f;
  f.plan.per_cluster_train = 100;
  std::unordered_set<int> used;
  for (size_t i = 0; i < f.assignments.size(); ++i) {
    if (f.assignments[i] == 0) used.insert(static_cast<int>(i));  // all of cluster 0
  }
  const ClientDataset peer =
      build_peer_client(f.pool, f.assignments, f.plan, 0.0, 4, "P", used);
  CHECK(!peer.warnings.empty());
  CHECK(peer.train.size() == 300);
}

TEST_CASE("build_peer_client: r outside [0,1] is rejected") {
  PoolFixture f;
  CHECK_THROWS_AS(build_peer_client(f.pool, f.assignments, f.plan, 1.5, 0, "P"),
                  PreconditionError);
}
