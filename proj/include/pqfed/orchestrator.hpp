#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pqfed/aggregate.hpp"
#include "pqfed/config.hpp"
#include "pqfed/csv.hpp"
#include "pqfed/emd.hpp"
#include "pqfed/pca.hpp"

namespace pqfed {

/// Everything the pipeline derives from the raw pool before any sharing
/// happens: the construction-phase clustering, the public projection anchor,
/// and the constructed clients.
struct Cohort {
  LabeledData pool;
  std::vector<int> pool_cluster_ids;  // construction-phase k-means labels
  ClusterModel partition_model;       // fit on the noiseless projected pool
  PcaModel anchor;
  ClientDataset target;
  std::vector<ClientDataset> peers;
  std::vector<double> peer_rates;
  int n_classes = 0;
};

Cohort build_cohort(const ExperimentConfig& config);

/// One client's share of the selection pipeline: its anchor-projected
/// features plus the noisy copy it sends to the server.
struct SharedFeatures {
  std::string client_id;
  Matrix projected;
  Matrix released;
};

struct SelectionResult {
  std::vector<std::pair<std::string, double>> distances;  // peer order preserved
  std::vector<std::string> collaborators;
  double tau = 0.0;
  double max_distance = 0.0;
  ClusterModel server_clusters;
  ClusterHistogram target_histogram;
  std::vector<std::pair<std::string, ClusterHistogram>> peer_histograms;
  std::vector<SharedFeatures> shared;  // target first, then peers
};

/// The selection pipeline end to end: project every client with the anchor,
/// noise locally, pool server-side, cluster, compare histograms by EMD, and
/// keep peers within tau = fraction * max distance. An empty result is valid;
/// the caller falls back to local-only training. `round_salt` selects an
/// independent noise/clustering repetition for the same cohort.
SelectionResult pqfed_select(const Cohort& cohort, const ExperimentConfig& config,
                             uint64_t round_salt = 0);
SelectionResult pqfed_select(const ExperimentConfig& config);

/// Trains `config.rounds` federated rounds over the participants (target
/// first) and records the target's test accuracy per round, starting with the
/// untrained model at round 0.
std::vector<RoundResult> run_federation(const ExperimentConfig& config,
                                        const std::vector<ClientDataset>& participants,
                                        const Cohort& cohort,
                                        const std::optional<ModelParams>& warm_start = {},
                                        uint64_t seed_salt = 0);

struct IncrementalResult {
  ModelParams model;
  int stop_index = 0;  // peers accepted before the first accuracy drop
  double best_accuracy = 0.0;
  std::vector<std::string> visited;      // peer ids in visit order
  std::vector<double> accuracies;        // accuracy after each visited peer
};

/// Distance-ordered incremental federation: train with the closest peer,
/// evaluate, keep going while accuracy does not drop, and return the model
/// from the last non-degrading step.
IncrementalResult incremental_train(
    const ExperimentConfig& config, const Cohort& cohort,
    const std::vector<std::pair<std::string, double>>& ordered_peers);

/// Desk-scale analogues of the evaluation grids.
enum class GridKind { EmdVsR, SimilarVsDissimilar, SelectionSweep, AttackCurve };

struct GridSpec {
  GridKind kind = GridKind::EmdVsR;
  std::vector<std::string> epsilons;       // EmdVsR / AttackCurve cells
  std::vector<Algorithm> algorithms;       // federation grids
  int repeats = 1;                         // seeded repetitions per cell
};

Table experiment_grid(const ExperimentConfig& config, const GridSpec& grid);

}  // namespace pqfed
