#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pqfed/ldp.hpp"
#include "pqfed/model.hpp"

namespace pqfed {

/// EMD threshold policy: tau = fraction * max observed peer distance.
struct SelectionPolicy {
  enum class Kind { Strict, Lenient, Custom };
  Kind kind = Kind::Strict;
  double fraction = 0.30;  // strict <-> 0.30, lenient <-> 0.60

  static SelectionPolicy strict();
  static SelectionPolicy lenient();
  static SelectionPolicy custom(double fraction);
  void validate() const;

  bool operator==(const SelectionPolicy&) const = default;
};

enum class DatasetKind { Synthetic, Mnist, Cifar10 };
enum class Algorithm { FedAvg, FedProx, FedDyn, Ifca };
enum class ModelInput { Raw, Pca };

/// Full run description. Every random draw anywhere in the pipeline is a pure
/// function of `seed`.
struct ExperimentConfig {
  std::optional<uint64_t> seed;

  DatasetKind dataset_kind = DatasetKind::Synthetic;
  std::string dataset_path;
  int dataset_n_clusters = 15;
  int dataset_dim = 50;
  int dataset_samples_per_cluster = 500;
  double dataset_spread = 1.0;

  int per_cluster_train = 400;
  int test_size = 300;  // 1200 for MNIST-like data
  std::vector<double> dissimilarity_rates = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5,
                                             0.6, 0.7, 0.8, 0.9, 1.0};

  int pca_components = 50;
  int public_size = 500;

  bool ldp_noiseless = false;
  double ldp_epsilon = 10.0;

  int cluster_k = 15;
  int cluster_max_iter = 300;

  SelectionPolicy policy;

  Algorithm algorithm = Algorithm::FedAvg;
  double mu = 0.01;
  double lambda = 0.01;
  int ifca_k = 4;
  int hidden = 64;
  ModelInput model_input = ModelInput::Raw;  // Pca for image datasets
  double learning_rate = 1e-3;
  int batch_size = 32;  // 16 for MNIST-like data
  int epochs_per_round = 1;
  int rounds = 20;

  int attack_n = 100;
  double attack_alpha = 0.05;
  int attack_rounds = 50;
  std::vector<std::string> attack_epsilons = {"0.1", "1", "10", "100"};

  uint64_t require_seed() const;
  LdpConfig ldp(uint64_t stream_seed) const;
  std::vector<LdpConfig> attack_budgets() const;
  LocalSpec local_spec(uint64_t stream_seed) const;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Reads `key = value` lines (dotted keys, '#' comments). Unknown keys and
/// out-of-range values are rejected by name. Missing keys keep their
/// documented defaults; the batch-size/test-size defaults follow dataset.kind.
ExperimentConfig parse_config(const std::filesystem::path& path,
                              const std::vector<std::string>& overrides = {});
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides = {});

/// Canonical serialization: every key, sorted, shortest round-trip floats.
/// parse(serialize(c)) == c.
std::string serialize_config(const ExperimentConfig& config);

uint64_t config_hash(const ExperimentConfig& config);

std::string to_string(Algorithm a);
std::string to_string(DatasetKind k);

}  // namespace pqfed
