#include "pqfed/aggregate.hpp"

#include "pqfed/error.hpp"
#include "pqfed/rng.hpp"

namespace pqfed {

namespace {

std::vector<int> layout_widths(const ModelParams& params) {
  std::vector<int> widths;
  for (const auto& [name, shape] : params.layout) {
    if (shape.size() == 2) {
      if (widths.empty()) widths.push_back(shape[0]);
      widths.push_back(shape[1]);
    }
  }
  return widths;
}

}  // namespace

ModelParams fedavg_aggregate(const std::vector<ClientUpdate>& updates) {
  if (updates.empty()) throw PreconditionError("no updates to aggregate");
  long total = 0;
  for (const auto& u : updates) {
    if (u.n <= 0) throw PreconditionError("aggregation weights must be positive");
    if (!u.params.same_layout(updates.front().params) ||
        u.params.values.size() != updates.front().params.values.size()) {
      throw ShapeError("client updates have mismatched parameter layouts");
    }
    total += u.n;
  }
  // Anchored form of the weighted mean: identical inputs come back bitwise
  // because every difference term is exactly zero.
  ModelParams out;
  out.layout = updates.front().params.layout;
  const Vector& anchor = updates.front().params.values;
  Vector delta = Vector::Zero(anchor.size());
  for (size_t k = 1; k < updates.size(); ++k) {
    delta += (static_cast<double>(updates[k].n) / static_cast<double>(total)) *
             (updates[k].params.values - anchor);
  }
  out.values = delta.isZero(0.0) ? anchor : (anchor + delta).eval();
  return out;
}

std::pair<ModelParams, std::vector<FedDynState>> feddyn_server_update(
    const std::vector<ClientUpdate>& updates, const std::vector<FedDynState>& states,
    const ModelParams& prev_global, double lambda) {
  if (updates.size() != states.size()) {
    throw ShapeError("updates and control-variate states must align one to one");
  }
  std::vector<FedDynState> next = states;
  if (lambda != 0.0) {
    for (size_t k = 0; k < updates.size(); ++k) {
      if (next[k].h.size() != prev_global.values.size()) {
        throw ShapeError("control variate length mismatch for client " + std::to_string(k));
      }
      next[k].h -= lambda * (updates[k].params.values - prev_global.values);
    }
  }
  return {fedavg_aggregate(updates), std::move(next)};
}

std::pair<std::vector<ModelParams>, std::vector<int>> ifca_round(
    const std::vector<ModelParams>& cluster_models, const std::vector<Matrix>& client_x,
    const std::vector<std::vector<int>>& client_y, const LocalSpec& spec) {
  if (cluster_models.empty()) throw PreconditionError("ifca needs at least one cluster model");
  if (client_x.size() != client_y.size()) throw ShapeError("client features/labels mismatch");

  const DenseNet net(layout_widths(cluster_models.front()));
  std::vector<int> assignments(client_x.size(), 0);
  std::vector<std::vector<ClientUpdate>> per_cluster(cluster_models.size());

  for (size_t c = 0; c < client_x.size(); ++c) {
    int best = 0;
    double best_loss = std::numeric_limits<double>::infinity();
    for (size_t m = 0; m < cluster_models.size(); ++m) {
      const double l = net.loss(cluster_models[m], client_x[c], client_y[c]);
      if (l < best_loss) {  // ties keep the lowest model index
        best_loss = l;
        best = static_cast<int>(m);
      }
    }
    assignments[c] = best;

    LocalSpec client_spec = spec;
    client_spec.seed = derive_seed(spec.seed, c);
    ModelParams trained =
        local_train(cluster_models[static_cast<size_t>(best)], client_x[c], client_y[c],
                    client_spec, TrainMode::plain());
    per_cluster[static_cast<size_t>(best)].push_back(
        {std::move(trained), static_cast<long>(client_x[c].rows())});
  }

  std::vector<ModelParams> next = cluster_models;
  for (size_t m = 0; m < next.size(); ++m) {
    if (!per_cluster[m].empty()) next[m] = fedavg_aggregate(per_cluster[m]);
  }
  return {std::move(next), std::move(assignments)};
}

std::pair<std::vector<ModelParams>, std::vector<int>> ifca_round(
    const std::vector<ModelParams>& cluster_models, const std::vector<ClientDataset>& clients,
    const LocalSpec& spec) {
  std::vector<Matrix> xs;
  std::vector<std::vector<int>> ys;
  for (const auto& c : clients) {
    xs.push_back(c.train_features());
    ys.push_back(c.train_labels());
  }
  return ifca_round(cluster_models, xs, ys, spec);
}

}  // namespace pqfed
