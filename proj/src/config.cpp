#include "pqfed/config.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "pqfed/csv.hpp"
#include "pqfed/error.hpp"
#include "pqfed/rng.hpp"

namespace pqfed {

SelectionPolicy SelectionPolicy::strict() { return {Kind::Strict, 0.30}; }
SelectionPolicy SelectionPolicy::lenient() { return {Kind::Lenient, 0.60}; }

SelectionPolicy SelectionPolicy::custom(double fraction) {
  SelectionPolicy p{Kind::Custom, fraction};
  p.validate();
  return p;
}

void SelectionPolicy::validate() const {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("policy.fraction must lie in (0,1], got " + format_double(fraction));
  }
  if (kind == Kind::Strict && fraction != 0.30) {
    throw ConfigError("strict policy is pinned to fraction 0.3");
  }
  if (kind == Kind::Lenient && fraction != 0.60) {
    throw ConfigError("lenient policy is pinned to fraction 0.6");
  }
}

uint64_t ExperimentConfig::require_seed() const {
  if (!seed) throw ConfigError("config key 'seed' is required (runs must be reproducible)");
  return *seed;
}

LdpConfig ExperimentConfig::ldp(uint64_t stream_seed) const {
  return ldp_noiseless ? LdpConfig::no_noise(stream_seed)
                       : LdpConfig::with_epsilon(ldp_epsilon, stream_seed);
}

std::vector<LdpConfig> ExperimentConfig::attack_budgets() const {
  std::vector<LdpConfig> out;
  for (const auto& token : attack_epsilons) {
    if (token == "none" || token == "inf") {
      out.push_back(LdpConfig::no_noise(0));
    } else {
      out.push_back(LdpConfig::with_epsilon(std::stod(token), 0));
    }
  }
  return out;
}

LocalSpec ExperimentConfig::local_spec(uint64_t stream_seed) const {
  LocalSpec spec;
  spec.learning_rate = learning_rate;
  spec.batch_size = batch_size;
  spec.epochs_per_round = epochs_per_round;
  spec.seed = stream_seed;
  return spec;
}

namespace {

struct KeyValue {
  std::string key;
  std::string value;
};

std::vector<KeyValue> parse_lines(const std::string& text) {
  std::vector<KeyValue> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    out.push_back({trim(line.substr(0, eq)), trim(line.substr(eq + 1))});
  }
  return out;
}

long parse_int(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const long v = std::stol(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + value + "'");
  }
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + value + "'");
  }
}

int parse_positive_int(const std::string& key, const std::string& value, long lo, long hi) {
  const long v = parse_int(key, value);
  if (v < lo || v > hi) {
    throw ConfigError("key '" + key + "': value " + std::to_string(v) + " outside [" +
                      std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return static_cast<int>(v);
}

double parse_real_in(const std::string& key, const std::string& value, double lo, double hi) {
  const double v = parse_real(key, value);
  if (!(v >= lo && v <= hi)) {
    throw ConfigError("key '" + key + "': value " + value + " outside [" + format_double(lo) +
                      ", " + format_double(hi) + "]");
  }
  return v;
}

std::vector<std::string> parse_list(const std::string& value) {
  std::vector<std::string> out;
  for (auto& item : split(value, ',')) {
    const std::string t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides) {
  std::vector<KeyValue> entries = parse_lines(text);
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("override '" + ov + "' is not of the form key=value");
    }
    entries.push_back({trim(ov.substr(0, eq)), trim(ov.substr(eq + 1))});
  }

  ExperimentConfig cfg;
  bool batch_size_set = false, test_size_set = false, model_input_set = false;
  bool fraction_set = false;

  for (const auto& [key, value] : entries) {
    if (key == "seed") {
      cfg.seed = static_cast<uint64_t>(parse_int(key, value));
    } else if (key == "dataset.kind") {
      if (value == "synthetic") {
        cfg.dataset_kind = DatasetKind::Synthetic;
      } else if (value == "mnist") {
        cfg.dataset_kind = DatasetKind::Mnist;
      } else if (value == "cifar10") {
        cfg.dataset_kind = DatasetKind::Cifar10;
      } else {
        throw ConfigError("key 'dataset.kind': unknown value '" + value + "'");
      }
    } else if (key == "dataset.path") {
      cfg.dataset_path = value;
    } else if (key == "dataset.n_clusters") {
      cfg.dataset_n_clusters = parse_positive_int(key, value, 2, 1000000);
    } else if (key == "dataset.dim") {
      cfg.dataset_dim = parse_positive_int(key, value, 2, 1000000);
    } else if (key == "dataset.samples_per_cluster") {
      cfg.dataset_samples_per_cluster = parse_positive_int(key, value, 1, 100000000);
    } else if (key == "dataset.spread") {
      cfg.dataset_spread = parse_real(key, value);
      if (!(cfg.dataset_spread > 0)) {
        throw ConfigError("key 'dataset.spread': must be > 0");
      }
    } else if (key == "partition.per_cluster_train") {
      cfg.per_cluster_train = parse_positive_int(key, value, 1, 100000000);
    } else if (key == "partition.test_size") {
      cfg.test_size = parse_positive_int(key, value, 1, 100000000);
      test_size_set = true;
    } else if (key == "partition.rates") {
      cfg.dissimilarity_rates.clear();
      for (const auto& item : parse_list(value)) {
        cfg.dissimilarity_rates.push_back(parse_real_in(key, item, 0.0, 1.0));
      }
    } else if (key == "pca.n_components") {
      cfg.pca_components = parse_positive_int(key, value, 1, 1000000);
    } else if (key == "pca.public_size") {
      cfg.public_size = parse_positive_int(key, value, 2, 100000000);
    } else if (key == "ldp.epsilon") {
      if (value == "none") {
        cfg.ldp_noiseless = true;
      } else {
        cfg.ldp_noiseless = false;
        cfg.ldp_epsilon = parse_real(key, value);
        if (!(std::isfinite(cfg.ldp_epsilon) && cfg.ldp_epsilon > 0)) {
          throw ConfigError("key 'ldp.epsilon': must be finite and > 0 (or 'none')");
        }
      }
    } else if (key == "cluster.k") {
      cfg.cluster_k = parse_positive_int(key, value, 1, 32);
    } else if (key == "cluster.max_iter") {
      cfg.cluster_max_iter = parse_positive_int(key, value, 1, 1000000);
    } else if (key == "policy.kind") {
      if (value == "strict") {
        cfg.policy.kind = SelectionPolicy::Kind::Strict;
      } else if (value == "lenient") {
        cfg.policy.kind = SelectionPolicy::Kind::Lenient;
      } else if (value == "custom") {
        cfg.policy.kind = SelectionPolicy::Kind::Custom;
      } else {
        throw ConfigError("key 'policy.kind': unknown value '" + value + "'");
      }
    } else if (key == "policy.fraction") {
      cfg.policy.fraction = parse_real(key, value);
      fraction_set = true;
      if (!(cfg.policy.fraction > 0 && cfg.policy.fraction <= 1)) {
        throw ConfigError("key 'policy.fraction': must lie in (0,1]");
      }
    } else if (key == "fl.algorithm") {
      if (value == "fedavg") {
        cfg.algorithm = Algorithm::FedAvg;
      } else if (value == "fedprox") {
        cfg.algorithm = Algorithm::FedProx;
      } else if (value == "feddyn") {
        cfg.algorithm = Algorithm::FedDyn;
      } else if (value == "ifca") {
        cfg.algorithm = Algorithm::Ifca;
      } else {
        throw ConfigError("key 'fl.algorithm': unknown value '" + value + "'");
      }
    } else if (key == "fl.mu") {
      cfg.mu = parse_real(key, value);
      if (cfg.mu < 0) throw ConfigError("key 'fl.mu': must be >= 0");
    } else if (key == "fl.lambda") {
      cfg.lambda = parse_real(key, value);
      if (cfg.lambda < 0) throw ConfigError("key 'fl.lambda': must be >= 0");
    } else if (key == "fl.ifca_k") {
      cfg.ifca_k = parse_positive_int(key, value, 1, 64);
    } else if (key == "fl.hidden") {
      cfg.hidden = parse_positive_int(key, value, 1, 100000);
    } else if (key == "fl.input") {
      if (value == "raw") {
        cfg.model_input = ModelInput::Raw;
      } else if (value == "pca") {
        cfg.model_input = ModelInput::Pca;
      } else {
        throw ConfigError("key 'fl.input': expected 'raw' or 'pca'");
      }
      model_input_set = true;
    } else if (key == "fl.learning_rate") {
      cfg.learning_rate = parse_real(key, value);
      if (!(cfg.learning_rate > 0)) throw ConfigError("key 'fl.learning_rate': must be > 0");
    } else if (key == "fl.batch_size") {
      cfg.batch_size = parse_positive_int(key, value, 1, 1000000);
      batch_size_set = true;
    } else if (key == "fl.epochs_per_round") {
      cfg.epochs_per_round = parse_positive_int(key, value, 1, 1000000);
    } else if (key == "fl.rounds") {
      cfg.rounds = parse_positive_int(key, value, 0, 1000000);
    } else if (key == "attack.n") {
      cfg.attack_n = parse_positive_int(key, value, 1, 100000000);
    } else if (key == "attack.alpha") {
      cfg.attack_alpha = parse_real(key, value);
      if (!(cfg.attack_alpha > 0 && cfg.attack_alpha < 1)) {
        throw ConfigError("key 'attack.alpha': must lie in (0,1)");
      }
    } else if (key == "attack.rounds") {
      cfg.attack_rounds = parse_positive_int(key, value, 1, 1000000);
    } else if (key == "attack.epsilons") {
      cfg.attack_epsilons = parse_list(value);
      for (const auto& token : cfg.attack_epsilons) {
        if (token == "none" || token == "inf") continue;
        const double e = parse_real(key, token);
        if (!(std::isfinite(e) && e > 0)) {
          throw ConfigError("key 'attack.epsilons': entries must be > 0 or 'none'");
        }
      }
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }

  // Dataset-dependent defaults where the key was not given explicitly.
  if (!batch_size_set) cfg.batch_size = cfg.dataset_kind == DatasetKind::Mnist ? 16 : 32;
  if (!test_size_set) cfg.test_size = cfg.dataset_kind == DatasetKind::Mnist ? 1200 : 300;
  if (!model_input_set) {
    cfg.model_input =
        cfg.dataset_kind == DatasetKind::Synthetic ? ModelInput::Raw : ModelInput::Pca;
  }
  if (!fraction_set) {
    cfg.policy.fraction = cfg.policy.kind == SelectionPolicy::Kind::Lenient ? 0.60 : 0.30;
  }
  cfg.policy.validate();
  if (cfg.dataset_kind != DatasetKind::Synthetic && cfg.dataset_path.empty()) {
    throw ConfigError("key 'dataset.path' is required for " + to_string(cfg.dataset_kind));
  }
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path,
                              const std::vector<std::string>& overrides) {
  return parse_config_text(read_text_file(path), overrides);
}

std::string serialize_config(const ExperimentConfig& c) {
  std::map<std::string, std::string> kv;
  if (c.seed) kv["seed"] = std::to_string(*c.seed);
  kv["dataset.kind"] = to_string(c.dataset_kind);
  if (!c.dataset_path.empty()) kv["dataset.path"] = c.dataset_path;
  kv["dataset.n_clusters"] = std::to_string(c.dataset_n_clusters);
  kv["dataset.dim"] = std::to_string(c.dataset_dim);
  kv["dataset.samples_per_cluster"] = std::to_string(c.dataset_samples_per_cluster);
  kv["dataset.spread"] = format_double(c.dataset_spread);
  kv["partition.per_cluster_train"] = std::to_string(c.per_cluster_train);
  kv["partition.test_size"] = std::to_string(c.test_size);
  {
    std::string rates;
    for (size_t i = 0; i < c.dissimilarity_rates.size(); ++i) {
      if (i) rates += ',';
      rates += format_double(c.dissimilarity_rates[i]);
    }
    kv["partition.rates"] = rates;
  }
  kv["pca.n_components"] = std::to_string(c.pca_components);
  kv["pca.public_size"] = std::to_string(c.public_size);
  kv["ldp.epsilon"] = c.ldp_noiseless ? "none" : format_double(c.ldp_epsilon);
  kv["cluster.k"] = std::to_string(c.cluster_k);
  kv["cluster.max_iter"] = std::to_string(c.cluster_max_iter);
  switch (c.policy.kind) {
    case SelectionPolicy::Kind::Strict:
      kv["policy.kind"] = "strict";
      break;
    case SelectionPolicy::Kind::Lenient:
      kv["policy.kind"] = "lenient";
      break;
    case SelectionPolicy::Kind::Custom:
      kv["policy.kind"] = "custom";
      break;
  }
  kv["policy.fraction"] = format_double(c.policy.fraction);
  kv["fl.algorithm"] = to_string(c.algorithm);
  kv["fl.mu"] = format_double(c.mu);
  kv["fl.lambda"] = format_double(c.lambda);
  kv["fl.ifca_k"] = std::to_string(c.ifca_k);
  kv["fl.hidden"] = std::to_string(c.hidden);
  kv["fl.input"] = c.model_input == ModelInput::Raw ? "raw" : "pca";
  kv["fl.learning_rate"] = format_double(c.learning_rate);
  kv["fl.batch_size"] = std::to_string(c.batch_size);
  kv["fl.epochs_per_round"] = std::to_string(c.epochs_per_round);
  kv["fl.rounds"] = std::to_string(c.rounds);
  kv["attack.n"] = std::to_string(c.attack_n);
  kv["attack.alpha"] = format_double(c.attack_alpha);
  kv["attack.rounds"] = std::to_string(c.attack_rounds);
  {
    std::string eps;
    for (size_t i = 0; i < c.attack_epsilons.size(); ++i) {
      if (i) eps += ',';
      eps += c.attack_epsilons[i];
    }
    kv["attack.epsilons"] = eps;
  }

  std::ostringstream out;
  for (const auto& [key, value] : kv) out << key << " = " << value << '\n';
  return out.str();
}

uint64_t config_hash(const ExperimentConfig& config) {
  return fnv1a64(serialize_config(config));
}

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::FedAvg:
      return "fedavg";
    case Algorithm::FedProx:
      return "fedprox";
    case Algorithm::FedDyn:
      return "feddyn";
    case Algorithm::Ifca:
      return "ifca";
  }
  return "fedavg";
}

std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::Synthetic:
      return "synthetic";
    case DatasetKind::Mnist:
      return "mnist";
    case DatasetKind::Cifar10:
      return "cifar10";
  }
  return "synthetic";
}

}  // namespace pqfed
