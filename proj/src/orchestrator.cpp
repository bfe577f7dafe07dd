#include "pqfed/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <unordered_set>

#include "pqfed/error.hpp"
#include "pqfed/mia.hpp"
#include "pqfed/rng.hpp"

namespace pqfed {

namespace {

LabeledData load_pool(const ExperimentConfig& config) {
  switch (config.dataset_kind) {
    case DatasetKind::Synthetic: {
      if (!config.dataset_path.empty()) return load_dataset_csv(config.dataset_path);
      const SyntheticData synth = generate_synthetic(
          config.dataset_n_clusters, config.dataset_dim, config.dataset_samples_per_cluster,
          config.dataset_spread, derive_seed(config.require_seed(), "pool"));
      return {synth.features, synth.labels};
    }
    case DatasetKind::Mnist: {
      const std::filesystem::path dir = config.dataset_path;
      return load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
    }
    case DatasetKind::Cifar10: {
      const std::filesystem::path path = config.dataset_path;
      if (std::filesystem::is_directory(path)) {
        LabeledData all;
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(path)) {
          if (entry.path().extension() == ".bin") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw IoError("no .bin batches under " + path.string());
        for (const auto& f : files) {
          LabeledData batch = load_cifar_binary(f);
          if (all.size() == 0) {
            all = std::move(batch);
          } else {
            Matrix merged(all.features.rows() + batch.features.rows(), all.features.cols());
            merged << all.features, batch.features;
            all.features = std::move(merged);
            all.labels.insert(all.labels.end(), batch.labels.begin(), batch.labels.end());
          }
        }
        return all;
      }
      return load_cifar_binary(path);
    }
  }
  throw Error("unreachable dataset kind");
}

Matrix features_of(const ClientDataset& client) { return client.train_features(); }

/// Client training matrices in the model's input space (raw or projected).
std::pair<Matrix, std::vector<int>> model_inputs(const ExperimentConfig& config,
                                                 const Cohort& cohort,
                                                 const std::vector<Sample>& samples) {
  Matrix x(static_cast<Eigen::Index>(samples.size()),
           static_cast<Eigen::Index>(samples.empty() ? 0 : samples.front().pixels.size()));
  std::vector<int> y(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    for (size_t j = 0; j < samples[i].pixels.size(); ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = samples[i].pixels[j];
    }
    y[i] = samples[i].label;
  }
  if (config.model_input == ModelInput::Pca) x = pca_project(cohort.anchor, x);
  return {x, y};
}

}  // namespace

Cohort build_cohort(const ExperimentConfig& config) {
  const uint64_t seed = config.require_seed();
  Cohort cohort;
  cohort.pool = load_pool(config);
  if (cohort.pool.size() == 0) throw PreconditionError("dataset pool is empty");

  // Public anchor, fit on a uniformly drawn public subset.
  {
    const int public_n = std::min(config.public_size, cohort.pool.size());
    Rng rng(derive_seed(seed, "public"));
    const std::vector<int> rows = rng.sample_indices(cohort.pool.size(), public_n);
    Matrix pub(public_n, cohort.pool.dim());
    for (int i = 0; i < public_n; ++i) pub.row(i) = cohort.pool.features.row(rows[static_cast<size_t>(i)]);
    cohort.anchor = pca_fit(pub, config.pca_components);
  }

  // Construction-phase heterogeneity: cluster the anchor-projected pool.
  const Matrix pool_scores = pca_project(cohort.anchor, cohort.pool.features);
  cohort.partition_model = kmeans_fit(pool_scores, config.cluster_k, config.cluster_max_iter,
                                      derive_seed(seed, "partition"));
  cohort.pool_cluster_ids = kmeans_assign(cohort.partition_model, pool_scores);

  // Pick three target clusters with enough capacity for train + test draw.
  PartitionPlan plan;
  plan.per_cluster_train = config.per_cluster_train;
  plan.test_size = config.test_size;
  plan.dissimilarity_rates = config.dissimilarity_rates;
  plan.seed = derive_seed(seed, "clients");
  {
    std::vector<int> sizes(static_cast<size_t>(config.cluster_k), 0);
    for (int c : cohort.pool_cluster_ids) sizes[static_cast<size_t>(c)]++;
    const int need = config.per_cluster_train + (config.test_size + 2) / 3;
    std::vector<int> eligible;
    for (int c = 0; c < config.cluster_k; ++c) {
      if (sizes[static_cast<size_t>(c)] >= need) eligible.push_back(c);
    }
    if (eligible.size() < 4) {
      throw CapacityError("only " + std::to_string(eligible.size()) + " clusters can host " +
                          std::to_string(need) + " samples; need 3 target clusters plus a spare");
    }
    Rng rng(derive_seed(seed, "target-clusters"));
    const std::vector<int> pick = rng.sample_indices(static_cast<int>(eligible.size()), 3);
    for (int i = 0; i < 3; ++i) {
      plan.target_clusters[static_cast<size_t>(i)] = eligible[static_cast<size_t>(pick[static_cast<size_t>(i)])];
    }
    std::sort(plan.target_clusters.begin(), plan.target_clusters.end());
  }

  cohort.target = build_target_client(cohort.pool, cohort.pool_cluster_ids, plan);
  std::unordered_set<int> used(cohort.target.train_indices.begin(),
                               cohort.target.train_indices.end());
  used.insert(cohort.target.test_indices.begin(), cohort.target.test_indices.end());

  for (size_t i = 0; i < config.dissimilarity_rates.size(); ++i) {
    const double r = config.dissimilarity_rates[i];
    char id[32];
    std::snprintf(id, sizeof(id), "P%02zu", i + 1);
    cohort.peers.push_back(build_peer_client(cohort.pool, cohort.pool_cluster_ids, plan, r,
                                             static_cast<uint64_t>(i), id, used));
    cohort.peer_rates.push_back(r);
  }

  cohort.n_classes = 0;
  for (int l : cohort.pool.labels) cohort.n_classes = std::max(cohort.n_classes, l + 1);
  return cohort;
}

SelectionResult pqfed_select(const Cohort& cohort, const ExperimentConfig& config,
                             uint64_t round_salt) {
  if (cohort.peers.empty()) throw PreconditionError("selection needs at least one peer");
  const uint64_t seed = config.require_seed();

  SelectionResult result;

  // Each client projects its own data with the anchor and noises it locally;
  // the sensitivity is computed on the client's own projection and never
  // shared. The stream is hashed from (seed, client id, round).
  auto share = [&](const ClientDataset& client) {
    SharedFeatures shared;
    shared.client_id = client.client_id;
    shared.projected = pca_project(cohort.anchor, features_of(client));
    const SensitivityVector sens = sensitivity_l1(shared.projected);
    const LdpConfig stream = config.ldp(derive_seed(seed, fnv1a64(client.client_id), round_salt));
    shared.released = add_laplace_noise(shared.projected, sens, stream);
    return shared;
  };
  result.shared.push_back(share(cohort.target));
  for (const auto& peer : cohort.peers) result.shared.push_back(share(peer));

  // Server side: pool every released representation, cluster once, then build
  // per-client histograms against the shared model.
  Eigen::Index total_rows = 0;
  for (const auto& s : result.shared) total_rows += s.released.rows();
  Matrix pooled(total_rows, result.shared.front().released.cols());
  Eigen::Index at = 0;
  for (const auto& s : result.shared) {
    pooled.middleRows(at, s.released.rows()) = s.released;
    at += s.released.rows();
  }
  result.server_clusters = kmeans_fit(pooled, config.cluster_k, config.cluster_max_iter,
                                      derive_seed(seed, "server-kmeans", round_salt));

  result.target_histogram = assign_histogram(result.server_clusters, result.shared[0].released);
  for (size_t i = 1; i < result.shared.size(); ++i) {
    result.peer_histograms.push_back(
        {result.shared[i].client_id,
         assign_histogram(result.server_clusters, result.shared[i].released)});
  }

  result.distances =
      client_distances(result.target_histogram, result.peer_histograms, result.server_clusters);
  result.max_distance = 0.0;
  for (const auto& [id, d] : result.distances) result.max_distance = std::max(result.max_distance, d);
  result.tau = config.policy.fraction * result.max_distance;
  for (const auto& [id, d] : result.distances) {
    if (d <= result.tau) result.collaborators.push_back(id);
  }
  if (result.collaborators.empty()) {
    std::cerr << "warning: no peer fell under tau=" << result.tau
              << "; falling back to local-only training\n";
  }
  return result;
}

SelectionResult pqfed_select(const ExperimentConfig& config) {
  return pqfed_select(build_cohort(config), config);
}

std::vector<RoundResult> run_federation(const ExperimentConfig& config,
                                        const std::vector<ClientDataset>& participants,
                                        const Cohort& cohort,
                                        const std::optional<ModelParams>& warm_start,
                                        uint64_t seed_salt) {
  if (participants.empty()) throw PreconditionError("federation needs participants");
  const uint64_t seed = derive_seed(config.require_seed(), "federation", seed_salt);

  std::vector<Matrix> xs;
  std::vector<std::vector<int>> ys;
  for (const auto& p : participants) {
    auto [x, y] = model_inputs(config, cohort, p.train);
    xs.push_back(std::move(x));
    ys.push_back(std::move(y));
  }
  auto [test_x, test_y] = model_inputs(config, cohort, participants.front().test);
  if (test_y.empty()) throw PreconditionError("target participant has no test data");

  const std::vector<int> arch = {static_cast<int>(xs.front().cols()), config.hidden,
                                 cohort.n_classes};
  const ModelParams initial =
      warm_start ? *warm_start : model_init(arch, derive_seed(seed, "init", 0));

  std::vector<RoundResult> results;
  results.push_back({0, initial, {}, evaluate(initial, test_x, test_y)});

  if (config.algorithm == Algorithm::Ifca) {
    std::vector<ModelParams> models;
    for (int j = 0; j < config.ifca_k; ++j) {
      models.push_back(warm_start && j == 0 ? *warm_start
                                            : model_init(arch, derive_seed(seed, "init",
                                                                           static_cast<uint64_t>(j))));
    }
    std::vector<int> assignments(participants.size(), 0);
    for (int t = 1; t <= config.rounds; ++t) {
      const LocalSpec spec = config.local_spec(derive_seed(seed, "round", static_cast<uint64_t>(t)));
      try {
        std::tie(models, assignments) = ifca_round(models, xs, ys, spec);
      } catch (const DivergenceError& e) {
        throw DivergenceError(std::string(e.what()) + " (round " + std::to_string(t) + ")");
      }
      const ModelParams& target_model = models[static_cast<size_t>(assignments[0])];
      results.push_back({t, target_model, models, evaluate(target_model, test_x, test_y)});
    }
    return results;
  }

  ModelParams global = initial;
  std::vector<FedDynState> states;
  if (config.algorithm == Algorithm::FedDyn) {
    for (size_t i = 0; i < participants.size(); ++i) {
      states.push_back({Vector::Zero(global.values.size()), config.lambda});
    }
  }

  for (int t = 1; t <= config.rounds; ++t) {
    const uint64_t round_seed = derive_seed(seed, "round", static_cast<uint64_t>(t));
    std::vector<ClientUpdate> updates;
    std::vector<ModelParams> per_client;
    for (size_t i = 0; i < participants.size(); ++i) {
      TrainMode mode = TrainMode::plain();
      if (config.algorithm == Algorithm::FedProx) {
        mode = TrainMode::prox(config.mu, global.values);
      } else if (config.algorithm == Algorithm::FedDyn) {
        mode = TrainMode::dyn(states[i], global.values);
      }
      const LocalSpec spec = config.local_spec(derive_seed(round_seed, i));
      ModelParams trained;
      try {
        trained = local_train(global, xs[i], ys[i], spec, mode);
      } catch (const DivergenceError& e) {
        throw DivergenceError(std::string(e.what()) + " (client " + participants[i].client_id +
                              ", round " + std::to_string(t) + ")");
      }
      updates.push_back({trained, static_cast<long>(xs[i].rows())});
      per_client.push_back(std::move(trained));
    }
    if (config.algorithm == Algorithm::FedDyn) {
      std::tie(global, states) = feddyn_server_update(updates, states, global, config.lambda);
    } else {
      global = fedavg_aggregate(updates);
    }
    results.push_back({t, global, std::move(per_client), evaluate(global, test_x, test_y)});
  }
  return results;
}

IncrementalResult incremental_train(
    const ExperimentConfig& config, const Cohort& cohort,
    const std::vector<std::pair<std::string, double>>& ordered_peers) {
  for (size_t i = 1; i < ordered_peers.size(); ++i) {
    if (ordered_peers[i].second < ordered_peers[i - 1].second) {
      throw PreconditionError("ordered_peers must be sorted by distance ascending");
    }
  }

  IncrementalResult result;
  if (ordered_peers.empty()) {
    const auto rounds = run_federation(config, {cohort.target}, cohort);
    result.model = rounds.back().global_params;
    result.stop_index = 0;
    result.best_accuracy = rounds.back().target_test_accuracy;
    return result;
  }

  auto peer_by_id = [&](const std::string& id) -> const ClientDataset& {
    for (const auto& p : cohort.peers) {
      if (p.client_id == id) return p;
    }
    throw PreconditionError("unknown peer id '" + id + "'");
  };

  std::optional<ModelParams> current;  // warm start; none on the first pass
  double best_acc = 0.0;
  ModelParams best_model;
  int accepted = 0;
  for (size_t i = 0; i < ordered_peers.size(); ++i) {
    const auto rounds = run_federation(config, {cohort.target, peer_by_id(ordered_peers[i].first)},
                                       cohort, current, static_cast<uint64_t>(i));
    const double acc = rounds.back().target_test_accuracy;
    result.visited.push_back(ordered_peers[i].first);
    result.accuracies.push_back(acc);
    if (acc < best_acc) break;
    best_acc = acc;
    best_model = rounds.back().global_params;
    current = best_model;
    accepted = static_cast<int>(i) + 1;
  }
  result.model = best_model;
  result.stop_index = accepted;
  result.best_accuracy = best_acc;
  return result;
}

Table experiment_grid(const ExperimentConfig& config, const GridSpec& grid) {
  Table table;
  switch (grid.kind) {
    case GridKind::EmdVsR: {
      // Dissimilarity-curve study: how LDP noise masks the r signal. The
      // cluster model is the fixed construction-phase one; only the client
      // features are re-noised per repetition.
      table.columns = {"epsilon", "r", "emd"};
      if (grid.epsilons.empty()) return table;
      const Cohort cohort = build_cohort(config);
      const uint64_t seed = config.require_seed();
      const int repeats = std::max(1, grid.repeats);

      const Matrix target_scores = pca_project(cohort.anchor, cohort.target.train_features());
      const SensitivityVector target_sens = sensitivity_l1(target_scores);
      std::vector<Matrix> peer_scores;
      std::vector<SensitivityVector> peer_sens;
      for (const auto& peer : cohort.peers) {
        peer_scores.push_back(pca_project(cohort.anchor, peer.train_features()));
        peer_sens.push_back(sensitivity_l1(peer_scores.back()));
      }

      for (const auto& eps : grid.epsilons) {
        ExperimentConfig cell = config;
        if (eps == "none" || eps == "inf") {
          cell.ldp_noiseless = true;
        } else {
          cell.ldp_noiseless = false;
          cell.ldp_epsilon = std::stod(eps);
        }
        const int reps_used = cell.ldp_noiseless ? 1 : repeats;  // noiseless is exact
        std::vector<double> mean(cohort.peers.size(), 0.0);
        for (int rep = 0; rep < reps_used; ++rep) {
          const ClusterHistogram t_hist = assign_histogram(
              cohort.partition_model,
              add_laplace_noise(target_scores, target_sens,
                                cell.ldp(derive_seed(seed, fnv1a64("T"),
                                                     static_cast<uint64_t>(rep)))));
          for (size_t i = 0; i < cohort.peers.size(); ++i) {
            const ClusterHistogram p_hist = assign_histogram(
                cohort.partition_model,
                add_laplace_noise(peer_scores[i], peer_sens[i],
                                  cell.ldp(derive_seed(seed,
                                                       fnv1a64(cohort.peers[i].client_id),
                                                       static_cast<uint64_t>(rep)))));
            mean[i] += emd(t_hist, p_hist, cohort.partition_model).first / reps_used;
          }
        }
        for (size_t i = 0; i < mean.size(); ++i) {
          table.rows.push_back({eps == "inf" ? "none" : eps,
                                format_double(cohort.peer_rates[i]), format_double(mean[i])});
        }
      }
      return table;
    }
    case GridKind::SimilarVsDissimilar: {
      table.columns = {"algorithm", "setup", "n_clients", "accuracy"};
      if (grid.algorithms.empty()) return table;
      const Cohort cohort = build_cohort(config);
      // Peers at r = 0 are same-distribution, peers at r = 1 fully shifted.
      std::vector<ClientDataset> similar, dissimilar;
      for (size_t i = 0; i < cohort.peers.size(); ++i) {
        if (cohort.peer_rates[i] == 0.0) similar.push_back(cohort.peers[i]);
        if (cohort.peer_rates[i] == 1.0) dissimilar.push_back(cohort.peers[i]);
      }
      for (Algorithm algo : grid.algorithms) {
        ExperimentConfig cell = config;
        cell.algorithm = algo;
        auto run = [&](const std::string& name, std::vector<ClientDataset> participants) {
          participants.insert(participants.begin(), cohort.target);
          const auto rounds = run_federation(cell, participants, cohort);
          table.rows.push_back({to_string(algo), name, std::to_string(participants.size()),
                                format_double(rounds.back().target_test_accuracy)});
        };
        run("local_only", {});
        run("similar", similar);
        run("dissimilar", dissimilar);
      }
      return table;
    }
    case GridKind::SelectionSweep: {
      table.columns = {"algorithm", "cohort", "n_clients", "accuracy"};
      if (grid.algorithms.empty()) return table;
      const Cohort cohort = build_cohort(config);
      const SelectionResult sel = pqfed_select(cohort, config);
      auto cohort_clients = [&](double fraction) {
        std::vector<ClientDataset> members;
        const double tau = fraction * sel.max_distance;
        for (size_t i = 0; i < cohort.peers.size(); ++i) {
          if (sel.distances[i].second <= tau) members.push_back(cohort.peers[i]);
        }
        return members;
      };
      for (Algorithm algo : grid.algorithms) {
        ExperimentConfig cell = config;
        cell.algorithm = algo;
        auto run = [&](const std::string& name, std::vector<ClientDataset> participants) {
          participants.insert(participants.begin(), cohort.target);
          const auto rounds = run_federation(cell, participants, cohort);
          table.rows.push_back({to_string(algo), name, std::to_string(participants.size()),
                                format_double(rounds.back().target_test_accuracy)});
        };
        run("strict", cohort_clients(0.30));
        run("lenient", cohort_clients(0.60));
        run("all", cohort.peers);
      }
      return table;
    }
    case GridKind::AttackCurve: {
      table.columns = {"epsilon", "rounds", "alpha", "power_mean", "power_std", "fpr_realized"};
      if (grid.epsilons.empty()) return table;
      const Cohort cohort = build_cohort(config);
      const Matrix target_scores =
          pca_project(cohort.anchor, cohort.target.train_features());
      std::vector<LdpConfig> budgets;
      for (const auto& eps : grid.epsilons) {
        budgets.push_back(eps == "none" || eps == "inf" ? LdpConfig::no_noise(0)
                                                        : LdpConfig::with_epsilon(std::stod(eps), 0));
      }
      const auto reports =
          mia_power_curve(target_scores, config.attack_n, config.attack_alpha, budgets,
                          config.attack_rounds, derive_seed(config.require_seed(), "attack"));
      return attack_report_table(reports);
    }
  }
  return table;
}

}  // namespace pqfed
