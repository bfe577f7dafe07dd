#pragma once

#include <utility>
#include <vector>

#include "pqfed/model.hpp"

namespace pqfed {

/// One client's trained parameters with its dataset size (the Eq.-style
/// aggregation weight).
struct ClientUpdate {
  ModelParams params;
  long n = 0;
};

struct RoundResult {
  int round = 0;
  ModelParams global_params;
  std::vector<ModelParams> per_client_params;
  double target_test_accuracy = 0.0;
};

/// Dataset-size-weighted mean of the updates.
ModelParams fedavg_aggregate(const std::vector<ClientUpdate>& updates);

/// Control-variate update h_k <- h_k - lambda*(w_k - w_prev) for every
/// participating client, plus the weighted-mean global model. lambda = 0
/// leaves every h untouched and reduces the round to plain averaging.
std::pair<ModelParams, std::vector<FedDynState>> feddyn_server_update(
    const std::vector<ClientUpdate>& updates, const std::vector<FedDynState>& states,
    const ModelParams& prev_global, double lambda);

/// One clustered round: every client picks the cluster model with the lowest
/// full-pass training loss (ties to the lowest index), trains it, and the
/// server aggregates per cluster. Clusterless models pass through unchanged.
std::pair<std::vector<ModelParams>, std::vector<int>> ifca_round(
    const std::vector<ModelParams>& cluster_models, const std::vector<ClientDataset>& clients,
    const LocalSpec& spec);
std::pair<std::vector<ModelParams>, std::vector<int>> ifca_round(
    const std::vector<ModelParams>& cluster_models, const std::vector<Matrix>& client_x,
    const std::vector<std::vector<int>>& client_y, const LocalSpec& spec);

}  // namespace pqfed
