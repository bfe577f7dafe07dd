#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pqfed/dataset.hpp"

namespace pqfed {

/// All trainable weights of the local model as one flat vector, plus the
/// (tensor name, shape) layout that defines the flattening.
struct ModelParams {
  Vector values;
  std::vector<std::pair<std::string, std::vector<int>>> layout;

  bool same_layout(const ModelParams& other) const { return layout == other.layout; }
};

/// Table-style hyperparameters for one client's local pass.
struct LocalSpec {
  double learning_rate = 1e-3;
  int batch_size = 32;
  int epochs_per_round = 1;
  uint64_t seed = 0;
};

/// Per-client control variate for the dynamic-regularization objective.
struct FedDynState {
  Vector h;
  double lambda = 0.0;
};

/// Local objective variant: plain cross-entropy, proximal penalty toward an
/// anchor, or the control-variate form -<h, w> + (lambda/2)|w|^2.
struct TrainMode {
  enum class Kind { Plain, Prox, Dyn };
  Kind kind = Kind::Plain;
  double mu = 0.0;
  double lambda = 0.0;
  Vector anchor;  // w^t; validated for prox and dyn
  Vector h;

  static TrainMode plain();
  static TrainMode prox(double mu, Vector anchor);
  static TrainMode dyn(const FedDynState& state, Vector anchor);
};

/// Fully-connected net described by layer widths (input, hidden..., classes),
/// tanh between layers, softmax cross-entropy on top.
class DenseNet {
 public:
  explicit DenseNet(std::vector<int> widths);

  const std::vector<int>& widths() const { return widths_; }
  int param_count() const { return param_count_; }
  int input_dim() const { return widths_.front(); }
  int n_classes() const { return widths_.back(); }

  std::vector<std::pair<std::string, std::vector<int>>> layout() const;

  /// Mean cross-entropy over the batch plus the mode's regularizer, and its
  /// gradient with respect to the flat parameter vector.
  std::pair<double, Vector> objective_grad(const ModelParams& params,
                                           const Matrix& batch_x, const std::vector<int>& batch_y,
                                           const TrainMode& mode) const;

  double loss(const ModelParams& params, const Matrix& x, const std::vector<int>& y) const;

  Matrix logits(const ModelParams& params, const Matrix& x) const;

 private:
  std::vector<int> widths_;
  int param_count_ = 0;
};

/// Scaled-uniform (Glorot) weight init, zero biases; identical seed gives
/// identical parameters.
ModelParams model_init(const std::vector<int>& widths, uint64_t seed);

/// Mini-batch SGD for spec.epochs_per_round passes, batch order drawn from the
/// seeded shuffle. The mode's regularizer enters the gradient exactly.
ModelParams local_train(const ModelParams& params, const Matrix& x, const std::vector<int>& y,
                        const LocalSpec& spec, const TrainMode& mode);
ModelParams local_train(const ModelParams& params, const ClientDataset& data,
                        const LocalSpec& spec, const TrainMode& mode);

/// Top-1 accuracy on the given samples (argmax ties pick the lowest class).
double evaluate(const ModelParams& params, const std::vector<Sample>& test);
double evaluate(const ModelParams& params, const Matrix& x, const std::vector<int>& y);

void save_model(const ModelParams& params, const std::filesystem::path& dir);
ModelParams load_model(const std::filesystem::path& dir);

}  // namespace pqfed
