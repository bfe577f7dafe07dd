#include "pqfed/model.hpp"

#include <cmath>
#include <sstream>

#include "pqfed/csv.hpp"
#include "pqfed/error.hpp"
#include "pqfed/rng.hpp"

namespace pqfed {

namespace {

std::vector<int> widths_from_layout(
    const std::vector<std::pair<std::string, std::vector<int>>>& layout) {
  std::vector<int> widths;
  for (const auto& [name, shape] : layout) {
    if (shape.size() == 2) {
      if (widths.empty()) widths.push_back(shape[0]);
      widths.push_back(shape[1]);
    }
  }
  if (widths.size() < 2) throw ShapeError("model layout has no weight tensors");
  return widths;
}

void check_mode(const TrainMode& mode, int param_count) {
  if (mode.kind == TrainMode::Kind::Plain) return;
  if (mode.anchor.size() != param_count) {
    throw PreconditionError("anchor length " + std::to_string(mode.anchor.size()) +
                            " does not match parameter count " + std::to_string(param_count));
  }
  if (mode.kind == TrainMode::Kind::Dyn && mode.h.size() != param_count) {
    throw PreconditionError("control variate length " + std::to_string(mode.h.size()) +
                            " does not match parameter count " + std::to_string(param_count));
  }
}

Matrix one_hot(const std::vector<int>& y, int classes) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(y.size()), classes);
  for (size_t i = 0; i < y.size(); ++i) {
    out(static_cast<Eigen::Index>(i), y[i]) = 1.0;
  }
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double maxv = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - maxv).exp();
    out.row(i) = e / e.sum();
  }
  return out;
}

}  // namespace

TrainMode TrainMode::plain() { return TrainMode{}; }

TrainMode TrainMode::prox(double mu, Vector anchor) {
  TrainMode m;
  m.kind = Kind::Prox;
  m.mu = mu;
  m.anchor = std::move(anchor);
  return m;
}

TrainMode TrainMode::dyn(const FedDynState& state, Vector anchor) {
  TrainMode m;
  m.kind = Kind::Dyn;
  m.lambda = state.lambda;
  m.h = state.h;
  m.anchor = std::move(anchor);
  return m;
}

DenseNet::DenseNet(std::vector<int> widths) : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw ValidationError("architecture needs input and output widths");
  for (int w : widths_) {
    if (w < 1) throw ValidationError("layer widths must be >= 1");
  }
  for (size_t l = 0; l + 1 < widths_.size(); ++l) {
    param_count_ += widths_[l] * widths_[l + 1] + widths_[l + 1];
  }
}

std::vector<std::pair<std::string, std::vector<int>>> DenseNet::layout() const {
  std::vector<std::pair<std::string, std::vector<int>>> out;
  for (size_t l = 0; l + 1 < widths_.size(); ++l) {
    out.push_back({"W" + std::to_string(l + 1), {widths_[l], widths_[l + 1]}});
    out.push_back({"b" + std::to_string(l + 1), {widths_[l + 1]}});
  }
  return out;
}

Matrix DenseNet::logits(const ModelParams& params, const Matrix& x) const {
  if (x.cols() != widths_.front()) {
    throw ShapeError("input has " + std::to_string(x.cols()) + " columns, model expects " +
                     std::to_string(widths_.front()));
  }
  Matrix a = x;
  int offset = 0;
  for (size_t l = 0; l + 1 < widths_.size(); ++l) {
    const int in = widths_[l], out = widths_[l + 1];
    const Eigen::Map<const Matrix> w(params.values.data() + offset, out, in);
    offset += in * out;
    const Eigen::Map<const Vector> b(params.values.data() + offset, out);
    offset += out;
    Matrix z = (a * w.transpose()).rowwise() + b.transpose();
    a = (l + 2 < widths_.size()) ? z.array().tanh().matrix() : z;
  }
  return a;
}

std::pair<double, Vector> DenseNet::objective_grad(const ModelParams& params,
                                                   const Matrix& batch_x,
                                                   const std::vector<int>& batch_y,
                                                   const TrainMode& mode) const {
  check_mode(mode, param_count_);
  const int batch = static_cast<int>(batch_x.rows());

  // Forward, keeping post-activation values for backprop.
  std::vector<Matrix> acts;
  acts.push_back(batch_x);
  int offset = 0;
  for (size_t l = 0; l + 1 < widths_.size(); ++l) {
    const int in = widths_[l], out = widths_[l + 1];
    const Eigen::Map<const Matrix> w(params.values.data() + offset, out, in);
    offset += in * out;
    const Eigen::Map<const Vector> b(params.values.data() + offset, out);
    offset += out;
    Matrix z = (acts.back() * w.transpose()).rowwise() + b.transpose();
    acts.push_back(l + 2 < widths_.size() ? z.array().tanh().matrix() : z);
  }

  const Matrix probs = softmax_rows(acts.back());
  const Matrix onehot = one_hot(batch_y, widths_.back());
  double loss = 0.0;
  for (int i = 0; i < batch; ++i) {
    loss -= std::log(std::max(probs(i, batch_y[static_cast<size_t>(i)]), 1e-300));
  }
  loss /= batch;

  Vector grad = Vector::Zero(param_count_);
  Matrix dz = (probs - onehot) / batch;
  for (size_t l = widths_.size() - 1; l-- > 0;) {
    const int in = widths_[l], out = widths_[l + 1];
    int w_offset = 0;
    for (size_t p = 0; p < l; ++p) w_offset += widths_[p] * widths_[p + 1] + widths_[p + 1];
    const Eigen::Map<const Matrix> w(params.values.data() + w_offset, out, in);
    Eigen::Map<Matrix> dw(grad.data() + w_offset, out, in);
    Eigen::Map<Vector> db(grad.data() + w_offset + in * out, out);
    dw = dz.transpose() * acts[l];
    db = dz.colwise().sum().transpose();
    if (l > 0) {
      const Matrix da = dz * w;
      dz = da.cwiseProduct(Matrix::Ones(da.rows(), da.cols()) - acts[l].cwiseProduct(acts[l]));
    }
  }

  // Regularizers. Zero-coefficient terms are skipped entirely so the
  // degenerate modes reduce to the plain objective bit for bit.
  if (mode.kind == TrainMode::Kind::Prox && mode.mu != 0.0) {
    const Vector diff = params.values - mode.anchor;
    loss += 0.5 * mode.mu * diff.squaredNorm();
    grad += mode.mu * diff;
  } else if (mode.kind == TrainMode::Kind::Dyn) {
    if (mode.h.size() > 0 && !mode.h.isZero(0.0)) {
      loss -= mode.h.dot(params.values);
      grad -= mode.h;
    }
    if (mode.lambda != 0.0) {
      loss += 0.5 * mode.lambda * params.values.squaredNorm();
      grad += mode.lambda * params.values;
    }
  }
  return {loss, grad};
}

double DenseNet::loss(const ModelParams& params, const Matrix& x, const std::vector<int>& y) const {
  const Matrix probs = softmax_rows(logits(params, x));
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    total -= std::log(std::max(probs(i, y[static_cast<size_t>(i)]), 1e-300));
  }
  return total / static_cast<double>(x.rows());
}

ModelParams model_init(const std::vector<int>& widths, uint64_t seed) {
  DenseNet net(widths);
  ModelParams params;
  params.layout = net.layout();
  params.values = Vector::Zero(net.param_count());
  Rng rng(seed);
  int offset = 0;
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    const int in = widths[l], out = widths[l + 1];
    const double scale = std::sqrt(6.0 / (in + out));
    for (int i = 0; i < in * out; ++i) {
      params.values(offset + i) = rng.uniform(-scale, scale);
    }
    offset += in * out + out;  // biases stay zero
  }
  return params;
}

ModelParams local_train(const ModelParams& params, const Matrix& x, const std::vector<int>& y,
                        const LocalSpec& spec, const TrainMode& mode) {
  if (x.rows() == 0) throw PreconditionError("local_train on empty data");
  if (spec.learning_rate <= 0 || spec.batch_size <= 0 || spec.epochs_per_round <= 0) {
    throw PreconditionError("learning_rate, batch_size and epochs_per_round must be positive");
  }
  const DenseNet net(widths_from_layout(params.layout));
  ModelParams current = params;
  Rng rng(spec.seed);
  const int n = static_cast<int>(x.rows());

  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

  int batch_index = 0;
  for (int epoch = 0; epoch < spec.epochs_per_round; ++epoch) {
    rng.shuffle(order);
    for (int start = 0; start < n; start += spec.batch_size, ++batch_index) {
      const int size = std::min(spec.batch_size, n - start);
      Matrix bx(size, x.cols());
      std::vector<int> by(static_cast<size_t>(size));
      for (int i = 0; i < size; ++i) {
        bx.row(i) = x.row(order[static_cast<size_t>(start + i)]);
        by[static_cast<size_t>(i)] = y[static_cast<size_t>(order[static_cast<size_t>(start + i)])];
      }
      const auto [loss, grad] = net.objective_grad(current, bx, by, mode);
      if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite loss at batch " + std::to_string(batch_index));
      }
      current.values -= spec.learning_rate * grad;
    }
  }
  return current;
}

ModelParams local_train(const ModelParams& params, const ClientDataset& data,
                        const LocalSpec& spec, const TrainMode& mode) {
  return local_train(params, data.train_features(), data.train_labels(), spec, mode);
}

double evaluate(const ModelParams& params, const Matrix& x, const std::vector<int>& y) {
  if (x.rows() == 0) throw PreconditionError("evaluate on an empty test set");
  const DenseNet net(widths_from_layout(params.layout));
  const Matrix scores = net.logits(params, x);
  int correct = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    int arg = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c) {
      if (scores(i, c) > scores(i, arg)) arg = static_cast<int>(c);
    }
    if (arg == y[static_cast<size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.rows());
}

double evaluate(const ModelParams& params, const std::vector<Sample>& test) {
  if (test.empty()) throw PreconditionError("evaluate on an empty test set");
  Matrix x(static_cast<Eigen::Index>(test.size()),
           static_cast<Eigen::Index>(test.front().pixels.size()));
  std::vector<int> y(test.size());
  for (size_t i = 0; i < test.size(); ++i) {
    for (size_t j = 0; j < test[i].pixels.size(); ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = test[i].pixels[j];
    }
    y[i] = test[i].label;
  }
  return evaluate(params, x, y);
}

void save_model(const ModelParams& params, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream csv;
  csv << "values";
  for (Eigen::Index i = 0; i < params.values.size(); ++i) {
    csv << ',' << format_double(params.values(i));
  }
  csv << '\n';
  write_text_file(dir / "model.csv", csv.str());

  std::ostringstream manifest;
  for (const auto& [name, shape] : params.layout) {
    manifest << name;
    for (int s : shape) manifest << ' ' << s;
    manifest << '\n';
  }
  write_text_file(dir / "model_manifest.txt", manifest.str());
}

ModelParams load_model(const std::filesystem::path& dir) {
  ModelParams params;
  const auto fields = split(trim(read_text_file(dir / "model.csv")), ',');
  if (fields.empty() || fields[0] != "values") throw FormatError("model.csv missing values row");
  params.values.resize(static_cast<Eigen::Index>(fields.size()) - 1);
  for (size_t i = 1; i < fields.size(); ++i) {
    params.values(static_cast<Eigen::Index>(i - 1)) = std::stod(fields[i]);
  }
  std::istringstream manifest(read_text_file(dir / "model_manifest.txt"));
  std::string line;
  while (std::getline(manifest, line)) {
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    std::string name;
    ls >> name;
    std::vector<int> shape;
    int v;
    while (ls >> v) shape.push_back(v);
    params.layout.push_back({name, shape});
  }
  return params;
}

}  // namespace pqfed
