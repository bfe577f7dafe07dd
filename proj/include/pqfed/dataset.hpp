#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace pqfed {

using Matrix = Eigen::MatrixXd;  // rows = samples
using Vector = Eigen::VectorXd;

/// One flattened image (or synthetic point) with its class label.
struct Sample {
  std::vector<double> pixels;  // values in [0, 1] for image data
  int label = 0;
};

/// Feature matrix plus aligned labels; the unit loaders return.
struct LabeledData {
  Matrix features;
  std::vector<int> labels;

  int size() const { return static_cast<int>(features.rows()); }
  int dim() const { return static_cast<int>(features.cols()); }
};

struct SyntheticData {
  Matrix features;
  std::vector<int> labels;
  std::vector<int> true_cluster_ids;  // generating blob of each row
};

/// A client's local data together with a record of how it was built.
struct ClientDataset {
  std::string client_id;
  std::vector<Sample> train;
  std::vector<Sample> test;                        // empty for non-target clients
  std::vector<std::pair<int, int>> provenance;     // (cluster_id, count) over train
  std::vector<int> train_indices;                  // pool row of each train sample
  std::vector<int> test_indices;
  std::vector<std::string> warnings;

  int provenance_total() const;
  Matrix train_features() const;
  std::vector<int> train_labels() const;
};

struct PartitionPlan {
  std::array<int, 3> target_clusters{};  // C_T
  int per_cluster_train = 400;
  std::vector<double> dissimilarity_rates;
  int test_size = 300;
  uint64_t seed = 0;

  void validate() const;
};

// ---- loaders ------------------------------------------------------------

/// IDX image file (magic 0x00000803, big-endian dims). Pixels scaled to [0,1].
Matrix load_idx_images(const std::filesystem::path& path);
std::vector<int> load_idx_labels(const std::filesystem::path& path);
LabeledData load_idx(const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path);

void write_idx_images(const std::filesystem::path& path, const Matrix& data,
                      int rows, int cols);
void write_idx_labels(const std::filesystem::path& path, const std::vector<int>& labels);

/// CIFAR-10 binary batch: 3073-byte records, 1 label byte + 3072 pixel bytes.
LabeledData load_cifar_binary(const std::filesystem::path& path);

/// Synthetic dataset CSV with header `label,c0,c1,...`.
void write_dataset_csv(const std::filesystem::path& path, const LabeledData& data);
LabeledData load_dataset_csv(const std::filesystem::path& path);

// ---- synthetic pool ------------------------------------------------------

/// Isotropic Gaussian blobs; centers are N(0, I) draws, rows are grouped by
/// generating cluster. Labels equal the generating cluster id.
SyntheticData generate_synthetic(int n_clusters, int dim, int samples_per_cluster,
                                 double spread, uint64_t seed);

// ---- client construction -------------------------------------------------

/// Target client: per_cluster_train samples from each cluster in C_T, test set
/// apportioned to the training set's cluster proportions, train/test disjoint.
ClientDataset build_target_client(const LabeledData& pool,
                                  const std::vector<int>& cluster_assignments,
                                  const PartitionPlan& plan,
                                  const std::string& client_id = "T");

/// Peer at dissimilarity rate r: floor((1-r)*per_cluster_train) samples from
/// each target cluster, the remainder from c_diff (r=1: from all non-target
/// clusters). Rows in `exclude` are avoided while capacity allows.
ClientDataset build_peer_client(const LabeledData& pool,
                                const std::vector<int>& cluster_assignments,
                                const PartitionPlan& plan, double r, uint64_t seed,
                                const std::string& client_id = "P",
                                const std::unordered_set<int>& exclude = {});

}  // namespace pqfed
