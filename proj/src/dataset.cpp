#include "pqfed/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "pqfed/csv.hpp"
#include "pqfed/error.hpp"
#include "pqfed/rng.hpp"

namespace pqfed {

namespace {

constexpr uint32_t kIdxImagesMagic = 0x00000803;
constexpr uint32_t kIdxLabelsMagic = 0x00000801;
constexpr size_t kCifarRecordBytes = 3073;  // 1 label byte + 3072 pixels

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>());
}

uint32_t read_u32_be(const std::vector<unsigned char>& buf, size_t offset,
                     const std::filesystem::path& path) {
  if (offset + 4 > buf.size()) {
    throw FormatError(path.string() + ": header truncated at offset " +
                      std::to_string(offset));
  }
  return (static_cast<uint32_t>(buf[offset]) << 24) |
         (static_cast<uint32_t>(buf[offset + 1]) << 16) |
         (static_cast<uint32_t>(buf[offset + 2]) << 8) |
         static_cast<uint32_t>(buf[offset + 3]);
}

void append_be_u32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

Sample make_sample(const LabeledData& pool, int row) {
  Sample s;
  s.pixels.resize(static_cast<size_t>(pool.dim()));
  for (int j = 0; j < pool.dim(); ++j) s.pixels[static_cast<size_t>(j)] = pool.features(row, j);
  s.label = pool.labels[static_cast<size_t>(row)];
  return s;
}

/// Largest-remainder apportionment of `total` over `weights`.
std::vector<int> apportion(const std::vector<double>& weights, int total) {
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<int> counts(weights.size(), 0);
  std::vector<std::pair<double, size_t>> remainders;
  int assigned = 0;
  for (size_t i = 0; i < weights.size(); ++i) {
    const double exact = total * weights[i] / wsum;
    counts[i] = static_cast<int>(std::floor(exact + 1e-12));
    assigned += counts[i];
    remainders.push_back({exact - counts[i], i});
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int k = 0; k < total - assigned; ++k) counts[remainders[static_cast<size_t>(k)].second]++;
  return counts;
}

std::vector<int> cluster_rows(const std::vector<int>& assignments, int cluster) {
  std::vector<int> rows;
  for (size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] == cluster) rows.push_back(static_cast<int>(i));
  }
  return rows;
}

/// Draws `count` rows from `candidates`, preferring rows outside `exclude`.
/// Falls back to the full candidate list (with a warning) if exclusion would
/// leave too few rows.
std::vector<int> draw_rows(const std::vector<int>& candidates, int count,
                           const std::unordered_set<int>& exclude, Rng& rng,
                           std::vector<std::string>& warnings, int cluster) {
  if (count == 0) return {};
  std::vector<int> avail;
  for (int r : candidates) {
    if (!exclude.count(r)) avail.push_back(r);
  }
  const std::vector<int>* source = &avail;
  if (static_cast<int>(avail.size()) < count) {
    if (static_cast<int>(candidates.size()) < count) {
      throw CapacityError("cluster " + std::to_string(cluster) + " has " +
                          std::to_string(candidates.size()) + " samples, need " +
                          std::to_string(count));
    }
    warnings.push_back("cluster " + std::to_string(cluster) +
                       ": not enough samples outside the target client, reusing "
                       "target rows");
    source = &candidates;
  }
  std::vector<int> picked = rng.sample_indices(static_cast<int>(source->size()), count);
  std::vector<int> rows;
  rows.reserve(static_cast<size_t>(count));
  for (int p : picked) rows.push_back((*source)[static_cast<size_t>(p)]);
  return rows;
}

}  // namespace

int ClientDataset::provenance_total() const {
  int total = 0;
  for (const auto& [cluster, count] : provenance) total += count;
  return total;
}

Matrix ClientDataset::train_features() const {
  if (train.empty()) return Matrix(0, 0);
  Matrix m(static_cast<Eigen::Index>(train.size()),
           static_cast<Eigen::Index>(train.front().pixels.size()));
  for (size_t i = 0; i < train.size(); ++i) {
    for (size_t j = 0; j < train[i].pixels.size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = train[i].pixels[j];
    }
  }
  return m;
}

std::vector<int> ClientDataset::train_labels() const {
  std::vector<int> labels;
  labels.reserve(train.size());
  for (const auto& s : train) labels.push_back(s.label);
  return labels;
}

void PartitionPlan::validate() const {
  if (target_clusters[0] == target_clusters[1] || target_clusters[0] == target_clusters[2] ||
      target_clusters[1] == target_clusters[2]) {
    throw PreconditionError("target_clusters must be distinct");
  }
  if (per_cluster_train <= 0) throw PreconditionError("per_cluster_train must be positive");
  if (test_size <= 0) throw PreconditionError("test_size must be positive");
  for (double r : dissimilarity_rates) {
    if (!(r >= 0.0 && r <= 1.0)) {
      throw PreconditionError("dissimilarity rate " + format_double(r) + " outside [0,1]");
    }
  }
}

Matrix load_idx_images(const std::filesystem::path& path) {
  const auto buf = read_bytes(path);
  const uint32_t magic = read_u32_be(buf, 0, path);
  if (magic != kIdxImagesMagic) {
    std::ostringstream msg;
    msg << path.string() << ": bad magic 0x" << std::hex << magic << " at offset 0, expected 0x"
        << kIdxImagesMagic;
    throw FormatError(msg.str());
  }
  const uint32_t count = read_u32_be(buf, 4, path);
  const uint32_t rows = read_u32_be(buf, 8, path);
  const uint32_t cols = read_u32_be(buf, 12, path);
  const size_t dim = static_cast<size_t>(rows) * cols;
  const size_t expected = 16 + static_cast<size_t>(count) * dim;
  if (buf.size() != expected) {
    throw FormatError(path.string() + ": length mismatch, header declares " +
                      std::to_string(count) + " images (" + std::to_string(expected) +
                      " bytes) but file has " + std::to_string(buf.size()) + " bytes");
  }
  Matrix out(count, dim);
  for (uint32_t i = 0; i < count; ++i) {
    for (size_t j = 0; j < dim; ++j) {
      out(i, static_cast<Eigen::Index>(j)) = buf[16 + i * dim + j] / 255.0;
    }
  }
  return out;
}

std::vector<int> load_idx_labels(const std::filesystem::path& path) {
  const auto buf = read_bytes(path);
  const uint32_t magic = read_u32_be(buf, 0, path);
  if (magic != kIdxLabelsMagic) {
    std::ostringstream msg;
    msg << path.string() << ": bad magic 0x" << std::hex << magic << " at offset 0, expected 0x"
        << kIdxLabelsMagic;
    throw FormatError(msg.str());
  }
  const uint32_t count = read_u32_be(buf, 4, path);
  if (buf.size() != 8 + static_cast<size_t>(count)) {
    throw FormatError(path.string() + ": length mismatch, header declares " +
                      std::to_string(count) + " labels but file has " +
                      std::to_string(buf.size() - 8) + " payload bytes");
  }
  std::vector<int> labels(count);
  for (uint32_t i = 0; i < count; ++i) labels[i] = buf[8 + i];
  return labels;
}

LabeledData load_idx(const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path) {
  LabeledData data;
  data.features = load_idx_images(images_path);
  data.labels = load_idx_labels(labels_path);
  if (static_cast<size_t>(data.features.rows()) != data.labels.size()) {
    throw FormatError("image count " + std::to_string(data.features.rows()) +
                      " does not match label count " + std::to_string(data.labels.size()));
  }
  return data;
}

void write_idx_images(const std::filesystem::path& path, const Matrix& data, int rows, int cols) {
  if (static_cast<Eigen::Index>(rows) * cols != data.cols()) {
    throw ShapeError("rows*cols does not match matrix width");
  }
  std::string out;
  append_be_u32(out, kIdxImagesMagic);
  append_be_u32(out, static_cast<uint32_t>(data.rows()));
  append_be_u32(out, static_cast<uint32_t>(rows));
  append_be_u32(out, static_cast<uint32_t>(cols));
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      const double v = std::clamp(data(i, j), 0.0, 1.0);
      out.push_back(static_cast<char>(std::lround(v * 255.0)));
    }
  }
  write_text_file(path, out);
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<int>& labels) {
  std::string out;
  append_be_u32(out, kIdxLabelsMagic);
  append_be_u32(out, static_cast<uint32_t>(labels.size()));
  for (int l : labels) out.push_back(static_cast<char>(l));
  write_text_file(path, out);
}

LabeledData load_cifar_binary(const std::filesystem::path& path) {
  const auto buf = read_bytes(path);
  if (buf.size() % kCifarRecordBytes != 0) {
    throw FormatError(path.string() + ": file length " + std::to_string(buf.size()) +
                      " is not a multiple of " + std::to_string(kCifarRecordBytes));
  }
  const size_t n = buf.size() / kCifarRecordBytes;
  LabeledData data;
  data.features.resize(static_cast<Eigen::Index>(n), 3072);
  data.labels.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const unsigned char label = buf[i * kCifarRecordBytes];
    if (label > 9) {
      throw ValidationError(path.string() + ": record " + std::to_string(i) +
                            " has invalid label " + std::to_string(label));
    }
    data.labels[i] = label;
    for (size_t j = 0; j < 3072; ++j) {
      data.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          buf[i * kCifarRecordBytes + 1 + j] / 255.0;
    }
  }
  return data;
}

void write_dataset_csv(const std::filesystem::path& path, const LabeledData& data) {
  std::ostringstream out;
  out << "label";
  for (int j = 0; j < data.dim(); ++j) out << ",c" << j;
  out << '\n';
  for (int i = 0; i < data.size(); ++i) {
    out << data.labels[static_cast<size_t>(i)];
    for (int j = 0; j < data.dim(); ++j) out << ',' << format_double(data.features(i, j));
    out << '\n';
  }
  write_text_file(path, out.str());
}

LabeledData load_dataset_csv(const std::filesystem::path& path) {
  const Table t = read_table_csv(path);
  if (t.columns.empty() || t.columns[0] != "label") {
    throw FormatError(path.string() + ": expected header starting with 'label'");
  }
  const int dim = static_cast<int>(t.columns.size()) - 1;
  LabeledData data;
  data.features.resize(static_cast<Eigen::Index>(t.rows.size()), dim);
  data.labels.resize(t.rows.size());
  for (size_t i = 0; i < t.rows.size(); ++i) {
    if (static_cast<int>(t.rows[i].size()) != dim + 1) {
      throw FormatError(path.string() + ": row " + std::to_string(i) + " has " +
                        std::to_string(t.rows[i].size()) + " fields, expected " +
                        std::to_string(dim + 1));
    }
    data.labels[i] = std::stoi(t.rows[i][0]);
    for (int j = 0; j < dim; ++j) {
      data.features(static_cast<Eigen::Index>(i), j) = std::stod(t.rows[i][static_cast<size_t>(j) + 1]);
    }
  }
  return data;
}

SyntheticData generate_synthetic(int n_clusters, int dim, int samples_per_cluster,
                                 double spread, uint64_t seed) {
  if (n_clusters < 2) throw PreconditionError("n_clusters must be >= 2");
  if (dim < 2) throw PreconditionError("dim must be >= 2");
  if (samples_per_cluster < 1) throw PreconditionError("samples_per_cluster must be >= 1");
  if (!(spread > 0.0)) throw PreconditionError("spread must be > 0");

  Rng rng(seed);
  Matrix centers(n_clusters, dim);
  for (int c = 0; c < n_clusters; ++c) {
    for (int j = 0; j < dim; ++j) centers(c, j) = rng.normal();
  }
  SyntheticData data;
  const int n = n_clusters * samples_per_cluster;
  data.features.resize(n, dim);
  data.labels.resize(static_cast<size_t>(n));
  data.true_cluster_ids.resize(static_cast<size_t>(n));
  int row = 0;
  for (int c = 0; c < n_clusters; ++c) {
    for (int s = 0; s < samples_per_cluster; ++s, ++row) {
      for (int j = 0; j < dim; ++j) {
        data.features(row, j) = centers(c, j) + spread * rng.normal();
      }
      data.labels[static_cast<size_t>(row)] = c;
      data.true_cluster_ids[static_cast<size_t>(row)] = c;
    }
  }
  return data;
}

ClientDataset build_target_client(const LabeledData& pool,
                                  const std::vector<int>& cluster_assignments,
                                  const PartitionPlan& plan, const std::string& client_id) {
  plan.validate();
  if (static_cast<size_t>(pool.size()) != cluster_assignments.size()) {
    throw ShapeError("cluster_assignments length does not match pool size");
  }

  // Equal training draw from each target cluster, so the test apportionment
  // is by equal thirds.
  const std::vector<double> proportions(3, 1.0);
  const std::vector<int> test_counts = apportion(proportions, plan.test_size);

  ClientDataset client;
  client.client_id = client_id;
  Rng rng(derive_seed(plan.seed, "target"));
  for (size_t k = 0; k < plan.target_clusters.size(); ++k) {
    const int cluster = plan.target_clusters[k];
    const std::vector<int> rows = cluster_rows(cluster_assignments, cluster);
    const int need = plan.per_cluster_train + test_counts[k];
    if (static_cast<int>(rows.size()) < need) {
      throw CapacityError("cluster " + std::to_string(cluster) + " has " +
                          std::to_string(rows.size()) + " samples, need " + std::to_string(need));
    }
    const std::vector<int> picked = rng.sample_indices(static_cast<int>(rows.size()), need);
    for (int i = 0; i < plan.per_cluster_train; ++i) {
      const int row = rows[static_cast<size_t>(picked[static_cast<size_t>(i)])];
      client.train.push_back(make_sample(pool, row));
      client.train_indices.push_back(row);
    }
    for (int i = plan.per_cluster_train; i < need; ++i) {
      const int row = rows[static_cast<size_t>(picked[static_cast<size_t>(i)])];
      client.test.push_back(make_sample(pool, row));
      client.test_indices.push_back(row);
    }
    client.provenance.push_back({cluster, plan.per_cluster_train});
  }
  return client;
}

ClientDataset build_peer_client(const LabeledData& pool,
                                const std::vector<int>& cluster_assignments,
                                const PartitionPlan& plan, double r, uint64_t seed,
                                const std::string& client_id,
                                const std::unordered_set<int>& exclude) {
  plan.validate();
  if (!(r >= 0.0 && r <= 1.0)) throw PreconditionError("r must lie in [0,1]");
  if (static_cast<size_t>(pool.size()) != cluster_assignments.size()) {
    throw ShapeError("cluster_assignments length does not match pool size");
  }

  const int keep = static_cast<int>(std::floor((1.0 - r) * plan.per_cluster_train + 1e-9));
  const int need_diff = 3 * (plan.per_cluster_train - keep);

  ClientDataset client;
  client.client_id = client_id;
  Rng rng(derive_seed(plan.seed, "peer", seed));

  std::map<int, int> counts;  // cluster -> train count, ordered for provenance
  for (int cluster : plan.target_clusters) {
    const std::vector<int> rows = cluster_rows(cluster_assignments, cluster);
    const std::vector<int> picked =
        draw_rows(rows, keep, exclude, rng, client.warnings, cluster);
    for (int row : picked) {
      client.train.push_back(make_sample(pool, row));
      client.train_indices.push_back(row);
    }
    if (keep > 0) counts[cluster] += keep;
  }

  if (need_diff > 0) {
    const bool fully_dissimilar = r >= 1.0;
    std::vector<int> outside;  // clusters outside C_T that exist in the pool
    {
      std::unordered_set<int> targets(plan.target_clusters.begin(), plan.target_clusters.end());
      std::map<int, int> sizes;
      for (int a : cluster_assignments) {
        if (!targets.count(a)) sizes[a]++;
      }
      for (const auto& [cluster, size] : sizes) {
        if (fully_dissimilar || size >= need_diff) outside.push_back(cluster);
      }
    }
    if (outside.empty()) {
      throw CapacityError("no cluster outside the target clusters can supply " +
                          std::to_string(need_diff) + " samples");
    }
    if (fully_dissimilar) {
      // r = 1: draw uniformly across every non-target cluster.
      std::vector<int> union_rows;
      for (int cluster : outside) {
        const std::vector<int> rows = cluster_rows(cluster_assignments, cluster);
        union_rows.insert(union_rows.end(), rows.begin(), rows.end());
      }
      const std::vector<int> picked =
          draw_rows(union_rows, need_diff, exclude, rng, client.warnings, -1);
      for (int row : picked) {
        client.train.push_back(make_sample(pool, row));
        client.train_indices.push_back(row);
        counts[cluster_assignments[static_cast<size_t>(row)]]++;
      }
    } else {
      const int c_diff = outside[static_cast<size_t>(rng.below(outside.size()))];
      const std::vector<int> rows = cluster_rows(cluster_assignments, c_diff);
      const std::vector<int> picked =
          draw_rows(rows, need_diff, exclude, rng, client.warnings, c_diff);
      for (int row : picked) {
        client.train.push_back(make_sample(pool, row));
        client.train_indices.push_back(row);
      }
      counts[c_diff] += need_diff;
    }
  }

  for (const auto& [cluster, count] : counts) client.provenance.push_back({cluster, count});
  return client;
}

}  // namespace pqfed
