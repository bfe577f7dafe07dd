#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "pqfed/error.hpp"
#include "pqfed/orchestrator.hpp"
#include "pqfed/rng.hpp"

using namespace pqfed;

namespace {

/// Desk-scale synthetic run: 6 well-separated blobs, 3 peers.
ExperimentConfig small_config() {
  ExperimentConfig c;
  c.seed = 424242;
  c.dataset_kind = DatasetKind::Synthetic;
  c.dataset_n_clusters = 6;
  c.dataset_dim = 12;
  c.dataset_samples_per_cluster = 200;
  c.dataset_spread = 0.5;
  c.per_cluster_train = 40;
  c.test_size = 30;
  c.dissimilarity_rates = {0.0, 0.5, 1.0};
  c.pca_components = 6;
  c.public_size = 150;
  c.ldp_noiseless = true;
  c.cluster_k = 6;
  c.cluster_max_iter = 100;
  c.hidden = 8;
  c.learning_rate = 0.1;
  c.batch_size = 16;
  c.rounds = 3;
  return c;
}

}  // namespace

TEST_CASE("build_cohort: clients respect the plan invariants") {
  const ExperimentConfig config = small_config();
  const Cohort cohort = build_cohort(config);
  CHECK(cohort.target.train.size() == 120);
  CHECK(cohort.target.test.size() == 30);
  CHECK(cohort.peers.size() == 3);
  for (const auto& peer : cohort.peers) {
    CHECK(peer.train.size() == 120);
    CHECK(peer.provenance_total() == 120);
    CHECK(peer.test.empty());
  }
  CHECK(cohort.n_classes == 6);

  // Peers avoid the target's pool rows.
  std::set<int> target_rows(cohort.target.train_indices.begin(),
                            cohort.target.train_indices.end());
  target_rows.insert(cohort.target.test_indices.begin(), cohort.target.test_indices.end());
  for (const auto& peer : cohort.peers) {
    for (int row : peer.train_indices) CHECK(target_rows.count(row) == 0);
  }
}

TEST_CASE("pqfed_select: r=0 peer is picked under any policy, fraction=1 picks all") {
  ExperimentConfig config = small_config();
  const Cohort cohort = build_cohort(config);

  for (double fraction : {0.30, 0.60, 1.0}) {
    config.policy = fraction == 1.0 ? SelectionPolicy::custom(1.0)
                                    : (fraction == 0.30 ? SelectionPolicy::strict()
                                                        : SelectionPolicy::lenient());
    const SelectionResult sel = pqfed_select(cohort, config);
    REQUIRE(sel.distances.size() == 3);
    CHECK(std::find(sel.collaborators.begin(), sel.collaborators.end(), "P01") !=
          sel.collaborators.end());
    if (fraction == 1.0) CHECK(sel.collaborators.size() == 3);
  }
}

TEST_CASE("pqfed_select: policy monotonicity and conditional prefix property") {
  ExperimentConfig config = small_config();
  config.dissimilarity_rates = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  const Cohort cohort = build_cohort(config);
  const SelectionResult sel = pqfed_select(cohort, config);

  std::vector<double> d;
  for (const auto& [id, dist] : sel.distances) d.push_back(dist);

  // Noiseless distances on clean blobs grow with r on this seeded instance.
  bool strictly_increasing = true;
  for (size_t i = 1; i < d.size(); ++i) strictly_increasing &= d[i] > d[i - 1];
  CHECK(strictly_increasing);

  std::vector<std::string> previous;
  for (double fraction : {0.1, 0.3, 0.5, 0.7, 0.9, 1.0}) {
    ExperimentConfig cell = config;
    cell.policy = SelectionPolicy::custom(fraction);
    const SelectionResult s = pqfed_select(cohort, cell);
    // Monotonicity: smaller fraction selects a subset.
    for (const auto& id : previous) {
      CHECK(std::find(s.collaborators.begin(), s.collaborators.end(), id) !=
            s.collaborators.end());
    }
    previous = s.collaborators;
    // Prefix of the r-ordering (peers were built in r order).
    for (size_t i = 0; i < s.collaborators.size(); ++i) {
      CHECK(s.collaborators[i] == sel.distances[i].first);
    }
    // Exactly the sub-threshold set.
    const double tau = fraction * sel.max_distance;
    for (size_t i = 0; i < d.size(); ++i) {
      const bool in = std::find(s.collaborators.begin(), s.collaborators.end(),
                                sel.distances[i].first) != s.collaborators.end();
      CHECK(in == (d[i] <= tau));
    }
  }
}

TEST_CASE("pqfed_select: deterministic end to end") {
  const ExperimentConfig config = small_config();
  const SelectionResult a = pqfed_select(config);
  const SelectionResult b = pqfed_select(config);
  REQUIRE(a.distances.size() == b.distances.size());
  for (size_t i = 0; i < a.distances.size(); ++i) {
    CHECK(a.distances[i].second == b.distances[i].second);
  }
  CHECK(a.collaborators == b.collaborators);
}

TEST_CASE("run_federation: rounds=0 reports only the initial model") {
  ExperimentConfig config = small_config();
  config.rounds = 0;
  const Cohort cohort = build_cohort(config);
  const auto results = run_federation(config, {cohort.target}, cohort);
  REQUIRE(results.size() == 1);
  CHECK(results[0].round == 0);
  CHECK(results[0].target_test_accuracy >= 0.0);
}

TEST_CASE("run_federation: target alone is local training") {
  ExperimentConfig config = small_config();
  config.rounds = 4;
  const Cohort cohort = build_cohort(config);
  const auto results = run_federation(config, {cohort.target}, cohort);
  REQUIRE(results.size() == 5);
  // Learning on separable blobs: the end beats the untrained model.
  CHECK(results.back().target_test_accuracy > results.front().target_test_accuracy);
}

TEST_CASE("run_federation: identical configs give identical round streams") {
  ExperimentConfig config = small_config();
  config.algorithm = Algorithm::FedProx;
  const Cohort cohort = build_cohort(config);
  const std::vector<ClientDataset> participants = {cohort.target, cohort.peers[0],
                                                   cohort.peers[1]};
  const auto a = run_federation(config, participants, cohort);
  const auto b = run_federation(config, participants, cohort);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].target_test_accuracy == b[i].target_test_accuracy);
    CHECK((a[i].global_params.values - b[i].global_params.values).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("run_federation: every algorithm runs end to end") {
  ExperimentConfig config = small_config();
  config.rounds = 2;
  const Cohort cohort = build_cohort(config);
  const std::vector<ClientDataset> participants = {cohort.target, cohort.peers[0]};
  for (Algorithm algo :
       {Algorithm::FedAvg, Algorithm::FedProx, Algorithm::FedDyn, Algorithm::Ifca}) {
    config.algorithm = algo;
    config.ifca_k = 2;
    const auto results = run_federation(config, participants, cohort);
    CHECK(results.size() == 3);
    for (const auto& r : results) {
      CHECK(r.target_test_accuracy >= 0.0);
      CHECK(r.target_test_accuracy <= 1.0);
    }
  }
}

TEST_CASE("incremental_train: empty peer list returns the locally trained model") {
  const ExperimentConfig config = small_config();
  const Cohort cohort = build_cohort(config);
  const IncrementalResult result = incremental_train(config, cohort, {});
  CHECK(result.stop_index == 0);
  CHECK(result.model.values.size() > 0);
  CHECK(result.best_accuracy > 0.0);
}

TEST_CASE("incremental_train: unsorted distances are rejected") {
  const ExperimentConfig config = small_config();
  const Cohort cohort = build_cohort(config);
  CHECK_THROWS_AS(incremental_train(config, cohort, {{"P01", 0.5}, {"P02", 0.1}}),
                  PreconditionError);
}

TEST_CASE("incremental_train: single peer stops at exactly one step") {
  const ExperimentConfig config = small_config();
  const Cohort cohort = build_cohort(config);
  const IncrementalResult result = incremental_train(config, cohort, {{"P01", 0.0}});
  CHECK(result.stop_index == 1);
  CHECK(result.visited == std::vector<std::string>{"P01"});
  CHECK(result.best_accuracy == result.accuracies[0]);
}

TEST_CASE("incremental_train: accepts at least the first peer, never executes past a drop") {
  ExperimentConfig config = small_config();
  config.rounds = 5;
  const Cohort cohort = build_cohort(config);
  const SelectionResult sel = pqfed_select(cohort, config);
  auto ordered = sel.distances;
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second < b.second; });
  const IncrementalResult result = incremental_train(config, cohort, ordered);
  CHECK(result.stop_index >= 1);
  CHECK(result.best_accuracy >= result.accuracies[0]);
  for (size_t i = 0; i + 1 < result.accuracies.size(); ++i) {
    double best_so_far = 0.0;
    for (size_t j = 0; j <= i; ++j) best_so_far = std::max(best_so_far, result.accuracies[j]);
    if (result.accuracies[i + 1] < best_so_far) {
      CHECK(i + 2 == result.accuracies.size());
    }
  }
}

TEST_CASE("experiment_grid: empty grids yield empty tables") {
  const ExperimentConfig config = small_config();
  for (GridKind kind : {GridKind::EmdVsR, GridKind::SimilarVsDissimilar,
                        GridKind::SelectionSweep, GridKind::AttackCurve}) {
    GridSpec grid;
    grid.kind = kind;
    const Table t = experiment_grid(config, grid);
    CHECK(t.rows.empty());
    CHECK(!t.columns.empty());
  }
}

TEST_CASE("experiment_grid: similar peers beat dissimilar peers on separable blobs") {
  ExperimentConfig config = small_config();
  config.dissimilarity_rates = {0.0, 0.0, 1.0, 1.0};
  config.rounds = 6;
  GridSpec grid;
  grid.kind = GridKind::SimilarVsDissimilar;
  grid.algorithms = {Algorithm::FedAvg};
  const Table t = experiment_grid(config, grid);
  REQUIRE(t.rows.size() == 3);
  double similar = -1.0, dissimilar = -1.0;
  for (const auto& row : t.rows) {
    if (row[1] == "similar") similar = std::stod(row[3]);
    if (row[1] == "dissimilar") dissimilar = std::stod(row[3]);
  }
  CHECK(similar >= dissimilar);
}

TEST_CASE("experiment_grid: strong noise flattens the EMD-vs-r curve") {
  ExperimentConfig config = small_config();
  config.dissimilarity_rates = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  GridSpec grid;
  grid.kind = GridKind::EmdVsR;
  grid.epsilons = {"0.1", "10", "none"};
  grid.repeats = 10;
  const Table t = experiment_grid(config, grid);
  REQUIRE(t.rows.size() == 18);
  auto range_of = [&](const std::string& eps) {
    double lo = 1e18, hi = -1e18;
    for (const auto& row : t.rows) {
      if (row[0] != eps) continue;
      const double d = std::stod(row[2]);
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
    return hi - lo;
  };
  // Strong noise hides the dissimilarity signal; weak noise tracks it.
  CHECK(range_of("0.1") < 0.5 * range_of("none"));
  CHECK(range_of("10") > range_of("0.1"));
}

TEST_CASE("run_federation: ifca with k=1 matches fedavg bitwise") {
  ExperimentConfig config = small_config();
  config.rounds = 2;
  const Cohort cohort = build_cohort(config);
  const std::vector<ClientDataset> participants = {cohort.target, cohort.peers[0]};

  config.algorithm = Algorithm::FedAvg;
  const auto avg = run_federation(config, participants, cohort);
  config.algorithm = Algorithm::Ifca;
  config.ifca_k = 1;
  const auto ifca = run_federation(config, participants, cohort);
  REQUIRE(avg.size() == ifca.size());
  for (size_t i = 0; i < avg.size(); ++i) {
    CHECK((avg[i].global_params.values - ifca[i].global_params.values).cwiseAbs().maxCoeff() ==
          0.0);
  }
}
