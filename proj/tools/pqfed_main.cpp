#include <CLI11.hpp>
#include <chrono>
#include <iostream>

#include "pqfed/error.hpp"
#include "pqfed/mia.hpp"
#include "pqfed/orchestrator.hpp"
#include "pqfed/report.hpp"
#include "pqfed/rng.hpp"

namespace {

using namespace pqfed;

struct StageTimer {
  RunManifest& manifest;
  std::string name;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  StageTimer(RunManifest& m, std::string n) : manifest(m), name(std::move(n)) {}
  ~StageTimer() {
    const auto elapsed = std::chrono::steady_clock::now() - start;
    manifest.stage_seconds.push_back(
        {name, std::chrono::duration<double>(elapsed).count()});
  }
};

Table clients_table(const Cohort& cohort) {
  Table t;
  t.columns = {"client_id", "r", "train_size", "test_size", "provenance"};
  auto row = [&](const ClientDataset& c, const std::string& r) {
    std::string prov;
    for (size_t i = 0; i < c.provenance.size(); ++i) {
      if (i) prov += '|';
      prov += std::to_string(c.provenance[i].first) + ':' + std::to_string(c.provenance[i].second);
    }
    t.rows.push_back({c.client_id, r, std::to_string(c.train.size()),
                      std::to_string(c.test.size()), prov});
  };
  row(cohort.target, "");
  for (size_t i = 0; i < cohort.peers.size(); ++i) {
    row(cohort.peers[i], format_double(cohort.peer_rates[i]));
  }
  return t;
}

Table distances_table(const SelectionResult& sel) {
  Table t;
  t.columns = {"client_id", "emd"};
  for (const auto& [id, d] : sel.distances) t.rows.push_back({id, format_double(d)});
  return t;
}

Table selection_table(const SelectionResult& sel) {
  Table t;
  t.columns = {"client_id", "emd", "selected"};
  for (const auto& [id, d] : sel.distances) {
    const bool in = std::find(sel.collaborators.begin(), sel.collaborators.end(), id) !=
                    sel.collaborators.end();
    t.rows.push_back({id, format_double(d), in ? "1" : "0"});
  }
  return t;
}

Table rounds_table(const std::vector<RoundResult>& rounds, const ExperimentConfig& config,
                   size_t n_clients) {
  Table t;
  t.columns = {"round", "algorithm", "n_clients", "target_accuracy"};
  for (const auto& r : rounds) {
    t.rows.push_back({std::to_string(r.round), to_string(config.algorithm),
                      std::to_string(n_clients), format_double(r.target_test_accuracy)});
  }
  return t;
}

Matrix matrix_table_rows(const Matrix& m, Table& t, const std::string& prefix) {
  t.columns.clear();
  for (Eigen::Index j = 0; j < m.cols(); ++j) t.columns.push_back(prefix + std::to_string(j));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<std::string> row;
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(format_double(m(i, j)));
    t.rows.push_back(std::move(row));
  }
  return m;
}

std::vector<ClientDataset> selected_participants(const Cohort& cohort,
                                                 const SelectionResult& sel) {
  std::vector<ClientDataset> participants = {cohort.target};
  for (const auto& peer : cohort.peers) {
    if (std::find(sel.collaborators.begin(), sel.collaborators.end(), peer.client_id) !=
        sel.collaborators.end()) {
      participants.push_back(peer);
    }
  }
  return participants;
}

int run_stage(const std::string& stage, const ExperimentConfig& config,
              const std::filesystem::path& out, const std::string& repro) {
  RunManifest manifest;
  manifest.config_hash = config_hash(config);
  std::filesystem::create_directories(out);
  std::vector<std::pair<std::string, Table>> tables;

  if (stage == "partition") {
    StageTimer timer(manifest, stage);
    const Cohort cohort = build_cohort(config);
    tables.push_back({"clients", clients_table(cohort)});
    std::filesystem::create_directories(out / "clients");
    auto dump = [&](const ClientDataset& c) {
      LabeledData data;
      data.features = c.train_features();
      data.labels = c.train_labels();
      const auto path = out / "clients" / (c.client_id + ".csv");
      write_dataset_csv(path, data);
      manifest.add_artifact(path);
    };
    dump(cohort.target);
    for (const auto& p : cohort.peers) dump(p);
  } else if (stage == "extract") {
    StageTimer timer(manifest, stage);
    const Cohort cohort = build_cohort(config);
    save_pca(cohort.anchor, out / "pca");
    manifest.add_artifact(out / "pca" / "pca_model.csv");
    Table elbow;
    elbow.columns = {"k", "cumulative_explained_variance"};
    std::vector<int> candidates;
    for (int k : {1, 2, 5, 10, 20, 50, 100}) {
      if (k <= std::min(config.pca_components, cohort.pool.dim())) candidates.push_back(k);
    }
    if (candidates.empty() || candidates.back() != config.pca_components) {
      if (config.pca_components <= cohort.pool.dim()) candidates.push_back(config.pca_components);
    }
    for (const auto& row : elbow_scan(cohort.pool.features, candidates)) {
      elbow.rows.push_back({std::to_string(row.k), format_double(row.cumulative_ratio)});
    }
    tables.push_back({"elbow", elbow});
  } else if (stage == "noise") {
    StageTimer timer(manifest, stage);
    const Cohort cohort = build_cohort(config);
    const SelectionResult sel = pqfed_select(cohort, config);
    std::filesystem::create_directories(out / "features");
    for (const auto& shared : sel.shared) {
      Table t;
      matrix_table_rows(shared.released, t, "c");
      const auto path = out / "features" / (shared.client_id + ".csv");
      write_table_csv(path, t);
      manifest.add_artifact(path);
    }
  } else if (stage == "cluster") {
    StageTimer timer(manifest, stage);
    const Cohort cohort = build_cohort(config);
    const SelectionResult sel = pqfed_select(cohort, config);
    save_cluster_model(sel.server_clusters, out / "cluster");
    manifest.add_artifact(out / "cluster" / "cluster_model.csv");
    Table hist;
    hist.columns = {"client_id"};
    for (int k = 0; k < sel.server_clusters.k(); ++k) hist.columns.push_back("w" + std::to_string(k));
    auto hist_row = [&](const std::string& id, const ClusterHistogram& h) {
      std::vector<std::string> row = {id};
      for (Eigen::Index i = 0; i < h.weights.size(); ++i) row.push_back(format_double(h.weights(i)));
      hist.rows.push_back(std::move(row));
    };
    hist_row(cohort.target.client_id, sel.target_histogram);
    for (const auto& [id, h] : sel.peer_histograms) hist_row(id, h);
    tables.push_back({"histograms", hist});
  } else if (stage == "distances") {
    StageTimer timer(manifest, stage);
    const SelectionResult sel = pqfed_select(config);
    tables.push_back({"distances", distances_table(sel)});
  } else if (stage == "select") {
    StageTimer timer(manifest, stage);
    const SelectionResult sel = pqfed_select(config);
    tables.push_back({"selection", selection_table(sel)});
    Table policy;
    policy.columns = {"fraction", "tau", "max_emd", "n_selected"};
    policy.rows.push_back({format_double(config.policy.fraction), format_double(sel.tau),
                           format_double(sel.max_distance),
                           std::to_string(sel.collaborators.size())});
    tables.push_back({"policy", policy});
  } else if (stage == "train") {
    StageTimer timer(manifest, stage);
    const Cohort cohort = build_cohort(config);
    const SelectionResult sel = pqfed_select(cohort, config);
    const auto participants = selected_participants(cohort, sel);
    const auto rounds = run_federation(config, participants, cohort);
    tables.push_back({"rounds", rounds_table(rounds, config, participants.size())});
    save_model(rounds.back().global_params, out / "model");
    manifest.add_artifact(out / "model" / "model.csv");
  } else if (stage == "incremental") {
    StageTimer timer(manifest, stage);
    const Cohort cohort = build_cohort(config);
    const SelectionResult sel = pqfed_select(cohort, config);
    auto ordered = sel.distances;
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const auto& a, const auto& b) { return a.second < b.second; });
    const IncrementalResult inc = incremental_train(config, cohort, ordered);
    Table t;
    t.columns = {"step", "client_id", "emd", "accuracy", "accepted"};
    for (size_t i = 0; i < inc.visited.size(); ++i) {
      t.rows.push_back({std::to_string(i + 1), inc.visited[i],
                        format_double(ordered[i].second), format_double(inc.accuracies[i]),
                        static_cast<int>(i) < inc.stop_index ? "1" : "0"});
    }
    tables.push_back({"incremental", t});
    save_model(inc.model, out / "model");
    manifest.add_artifact(out / "model" / "model.csv");
  } else if (stage == "attack") {
    StageTimer timer(manifest, stage);
    GridSpec grid;
    grid.kind = GridKind::AttackCurve;
    grid.epsilons = config.attack_epsilons;
    tables.push_back({"attack", experiment_grid(config, grid)});
  } else if (stage == "grid") {
    StageTimer timer(manifest, stage);
    GridSpec grid;
    std::string name = repro;
    if (repro == "fig3") {
      grid.kind = GridKind::EmdVsR;
      grid.epsilons = {"0.1", "1", "10", "none"};
    } else if (repro == "fig5") {
      grid.kind = GridKind::AttackCurve;
      grid.epsilons = config.attack_epsilons;
    } else if (repro == "tableII") {
      grid.kind = GridKind::SimilarVsDissimilar;
      grid.algorithms = {Algorithm::FedAvg, Algorithm::FedProx, Algorithm::FedDyn};
    } else if (repro == "tableIII") {
      grid.kind = GridKind::SelectionSweep;
      grid.algorithms = {Algorithm::FedAvg, Algorithm::FedProx, Algorithm::FedDyn};
    } else {
      throw ConfigError("unknown --repro preset '" + repro +
                        "' (expected tableII, tableIII, fig3 or fig5)");
    }
    tables.push_back({"grid_" + name, experiment_grid(config, grid)});
  } else {
    throw ConfigError("unknown stage '" + stage + "'");
  }

  if (!tables.empty()) render_report(out, tables, manifest);
  manifest.write(out / "manifest.txt");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privacy-preserving quality-controlled federated learning pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::string repro;
  std::vector<std::string> overrides;

  const std::vector<std::string> stages = {"partition", "extract",     "noise",  "cluster",
                                           "distances", "select",      "train",  "incremental",
                                           "attack",    "grid"};
  for (const auto& stage : stages) {
    auto* sub = app.add_subcommand(stage);
    sub->add_option("-c,--config", config_path, "run configuration file")->required();
    sub->add_option("-o,--out", out_dir, "output directory");
    sub->add_option("--set", overrides, "override a config key (key=value, last wins)");
    if (stage == "grid") {
      sub->add_option("--repro", repro, "preset: tableII, tableIII, fig3 or fig5")->required();
    }
  }

  CLI11_PARSE(app, argc, argv);

  ExperimentConfig config;
  try {
    config = pqfed::parse_config(config_path, overrides);
    config.require_seed();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  try {
    return run_stage(app.get_subcommands().front()->get_name(), config, out_dir, repro);
  } catch (const pqfed::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const pqfed::FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const pqfed::CapacityError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const pqfed::ValidationError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const pqfed::IoError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
