#include "fpml/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json_codec.hpp"

namespace fpml {

namespace {

double softplus(double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double ev = std::exp(v);
  return ev / (1.0 + ev);
}

double activate(Activation a, double z) { return a == Activation::Relu ? std::max(z, 0.0) : std::tanh(z); }

double activate_derivative(Activation a, double z) {
  if (a == Activation::Relu) return z > 0.0 ? 1.0 : 0.0;
  const double th = std::tanh(z);
  return 1.0 - th * th;
}

// Row-wise softmax with max subtraction.
// Saturated logits would otherwise give exact zeros, where f'(D) is -inf.
constexpr double kSimplexFloor = 1e-300;

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& v) {
  Eigen::MatrixXd out = (v.colwise() - v.rowwise().maxCoeff()).array().exp().matrix();
  out.array().colwise() /= out.rowwise().sum().array();
  return out.cwiseMax(kSimplexFloor);
}

struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;  // input to each layer (N x in)
  std::vector<Eigen::MatrixXd> pre;     // pre-activations (N x out)
  Eigen::MatrixXd head;                 // T or D
};

ForwardCache forward_cached(const NetworkModel& model, const Eigen::MatrixXd& x) {
  if (x.cols() != model.input_dim()) throw DimensionError("feature width differs from the model input");
  ForwardCache cache;
  Eigen::MatrixXd a = x;
  const auto n_layers = model.layers.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& layer = model.layers[l];
    Eigen::MatrixXd z = (a * layer.weights.transpose()).rowwise() + layer.bias.transpose();
    cache.inputs.push_back(std::move(a));
    if (l + 1 < n_layers) {
      a = z.unaryExpr([act = model.spec.activation](double v) { return activate(act, v); });
    }
    cache.pre.push_back(std::move(z));
  }
  const Eigen::MatrixXd& v = cache.pre.back();
  if (model.spec.head == Head::SimplexD) {
    cache.head = softmax_rows(v);
  } else {
    cache.head = v.unaryExpr([id = model.spec.divergence](double s) { return raw_link(id, s); });
  }
  return cache;
}

}  // namespace

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  throw ParameterError("unknown activation '" + std::string(name) + "' (expected relu or tanh)");
}

std::string_view to_string(Activation activation) { return activation == Activation::Relu ? "relu" : "tanh"; }

void validate(const MlpSpec& spec) {
  if (spec.layer_sizes.size() < 2) throw ParameterError("network needs at least input and output sizes");
  for (int width : spec.layer_sizes) {
    if (width < 1) throw ParameterError("layer widths must be positive");
  }
  if (spec.layer_sizes.back() < 2) throw ParameterError("network output width must be K >= 2");
}

NetworkModel init(const MlpSpec& spec, std::uint64_t seed) {
  validate(spec);
  NetworkModel model{spec, seed, {}};
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
    const int fan_in = spec.layer_sizes[l];
    const int fan_out = spec.layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseLayer layer{Eigen::MatrixXd(fan_out, fan_in), Eigen::VectorXd::Zero(fan_out)};
    for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) layer.weights(i, j) = dist(rng);
    }
    model.layers.push_back(std::move(layer));
  }
  return model;
}

double raw_link(DivergenceId id, double v) {
  switch (id) {
    case DivergenceId::KL: return v;
    case DivergenceId::GAN: return -softplus(-v);
    case DivergenceId::SL: return -1.0 / (1.0 + softplus(v));
  }
  throw ParameterError("invalid divergence id");
}

double raw_link_derivative(DivergenceId id, double v) {
  switch (id) {
    case DivergenceId::KL: return 1.0;
    case DivergenceId::GAN: return sigmoid(-v);
    case DivergenceId::SL: {
      const double denom = 1.0 + softplus(v);
      return sigmoid(v) / (denom * denom);
    }
  }
  throw ParameterError("invalid divergence id");
}

Eigen::MatrixXd forward(const NetworkModel& model, const Eigen::MatrixXd& x) {
  return forward_cached(model, x).head;
}

PosteriorMatrix model_posterior(const NetworkModel& model, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd head = forward(model, x);
  if (model.spec.head == Head::SimplexD) return {std::move(head), false};
  return estimate_posterior(divergence(model.spec.divergence), head);
}

ObjectiveGradient objective_and_gradient(const NetworkModel& model, const Eigen::MatrixXd& x,
                                         const Eigen::VectorXi& labels, const Eigen::VectorXd& e) {
  detail::check_batch(x.rows(), labels);
  const ForwardCache cache = forward_cached(model, x);
  const DivergenceSpec& spec = divergence(model.spec.divergence);
  const Eigen::Index n = x.rows();
  const double inv_n = 1.0 / static_cast<double>(n);

  // Gradient of the mean objective w.r.t. the last linear output.
  double value = 0.0;
  Eigen::MatrixXd delta(n, model.output_dim());
  for (Eigen::Index s = 0; s < n; ++s) {
    const Eigen::VectorXd row = cache.head.row(s).transpose();
    const SampleObjective obj = head_objective(spec, model.spec.head, row, labels(s), e);
    value += obj.value;
    if (model.spec.head == Head::SimplexD) {
      // Softmax Jacobian: dJ/dv = D * (g - <g, D>).
      delta.row(s) = (row.array() * (obj.gradient.array() - obj.gradient.dot(row))).matrix().transpose();
    } else {
      for (Eigen::Index j = 0; j < delta.cols(); ++j) {
        delta(s, j) = obj.gradient(j) * raw_link_derivative(model.spec.divergence, cache.pre.back()(s, j));
      }
    }
  }
  delta *= inv_n;
  value *= inv_n;

  ObjectiveGradient out{value, std::vector<DenseLayer>(model.layers.size())};
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    out.layers[l].weights = delta.transpose() * cache.inputs[l];
    out.layers[l].bias = delta.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd upstream = delta * model.layers[l].weights;
      const Eigen::MatrixXd& z = cache.pre[l - 1];
      for (Eigen::Index i = 0; i < upstream.rows(); ++i) {
        for (Eigen::Index j = 0; j < upstream.cols(); ++j) {
          upstream(i, j) *= activate_derivative(model.spec.activation, z(i, j));
        }
      }
      delta = std::move(upstream);
    }
  }
  return out;
}

namespace {

template <typename Layers>
Eigen::Index parameter_count(const Layers& layers) {
  Eigen::Index count = 0;
  for (const auto& layer : layers) count += layer.weights.size() + layer.bias.size();
  return count;
}

Eigen::VectorXd flatten_layers(const std::vector<DenseLayer>& layers) {
  Eigen::VectorXd flat(parameter_count(layers));
  Eigen::Index offset = 0;
  for (const auto& layer : layers) {
    flat.segment(offset, layer.weights.size()) = layer.weights.reshaped();
    offset += layer.weights.size();
    flat.segment(offset, layer.bias.size()) = layer.bias;
    offset += layer.bias.size();
  }
  return flat;
}

}  // namespace

Eigen::VectorXd flatten_parameters(const NetworkModel& model) { return flatten_layers(model.layers); }

Eigen::VectorXd flatten_gradient(const ObjectiveGradient& gradient) { return flatten_layers(gradient.layers); }

void assign_parameters(NetworkModel& model, const Eigen::VectorXd& flat) {
  if (flat.size() != parameter_count(model.layers)) throw DimensionError("parameter vector has the wrong length");
  Eigen::Index offset = 0;
  for (auto& layer : model.layers) {
    layer.weights.reshaped() = flat.segment(offset, layer.weights.size());
    offset += layer.weights.size();
    layer.bias = flat.segment(offset, layer.bias.size());
    offset += layer.bias.size();
  }
}

void validate(const TrainConfig& config) {
  if (config.epochs < 0) throw ParameterError("epochs must be non-negative");
  if (config.batch_size < 1) throw ParameterError("batch size must be positive");
  if (!(config.lr0 > 0.0)) throw ParameterError("learning rate must be positive");
  if (!(config.momentum >= 0.0 && config.momentum < 1.0)) throw ParameterError("momentum must lie in [0, 1)");
  if (config.snapshot_every < 0) throw ParameterError("snapshot interval must be non-negative");
}

double cosine_lr(double lr0, long step, long total_steps) {
  if (total_steps <= 1) return lr0;
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps - 1);
  return 0.5 * lr0 * (1.0 + std::cos(M_PI * std::clamp(progress, 0.0, 1.0)));
}

void check_compatible(const NetworkModel& model, const ObjectiveConfig& objective) {
  if (model.spec.head != objective.head) throw ParameterError("model head differs from the objective head");
  if (model.spec.divergence != objective.divergence) {
    throw ParameterError("model link divergence differs from the objective divergence");
  }
}

namespace {

double dataset_objective(const NetworkModel& model, const LabeledDataset& data, const Eigen::VectorXd& e) {
  const Eigen::MatrixXd head = forward(model, data.features());
  const DivergenceSpec& spec = divergence(model.spec.divergence);
  double total = 0.0;
  for (Eigen::Index n = 0; n < data.size(); ++n) {
    const Eigen::VectorXd row = head.row(n).transpose();
    total += model.spec.head == Head::RawT ? corrected_jf_sample(spec, row, data.labels()(n), e)
                                           : corrected_simplex_sample(spec, row, data.labels()(n), e);
  }
  return total / static_cast<double>(data.size());
}

void check_data(const NetworkModel& model, const LabeledDataset& data) {
  if (data.k() != model.output_dim()) throw DimensionError("dataset class count differs from the model output");
  if (data.dim() != model.input_dim()) throw DimensionError("dataset feature width differs from the model input");
}

}  // namespace

TrainResult train(NetworkModel model, const LabeledDataset& data, const ObjectiveConfig& objective,
                  const TrainConfig& config, const LabeledDataset* test) {
  validate(config);
  check_compatible(model, objective);
  check_data(model, data);
  if (test) check_data(model, *test);
  const Eigen::VectorXd e = training_rates(objective, data.k());
  validate(objective, data.k());

  const Eigen::Index n = data.size();
  const Eigen::Index batches = (n + config.batch_size - 1) / config.batch_size;
  const long total_steps = static_cast<long>(batches) * config.epochs;

  std::vector<DenseLayer> velocity;
  for (const auto& layer : model.layers) {
    velocity.push_back({Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()),
                        Eigen::VectorXd::Zero(layer.bias.size())});
  }

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(config.seed);

  TrainTrace trace;
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (Eigen::Index b = 0; b < batches; ++b) {
      const Eigen::Index start = b * config.batch_size;
      const Eigen::Index count = std::min<Eigen::Index>(config.batch_size, n - start);
      const std::vector<int> idx(order.begin() + start, order.begin() + start + count);
      const Eigen::MatrixXd xb = data.features()(idx, Eigen::all);
      const Eigen::VectorXi yb = data.labels()(idx);

      ObjectiveGradient grad;
      try {
        grad = objective_and_gradient(model, xb, yb, e);
      } catch (const DomainError& err) {
        // Inputs were validated up front, so this means the outputs ran away.
        std::ostringstream msg;
        msg << "diverged at epoch " << epoch << ", step " << step << ": " << err.what();
        throw TrainingError(msg.str());
      }
      if (!std::isfinite(grad.value)) {
        std::ostringstream msg;
        msg << "non-finite objective at epoch " << epoch << ", step " << step;
        throw TrainingError(msg.str());
      }
      const double lr = cosine_lr(config.lr0, step, total_steps);
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        // Descent on the negated objective.
        velocity[l].weights = config.momentum * velocity[l].weights - grad.layers[l].weights;
        velocity[l].bias = config.momentum * velocity[l].bias - grad.layers[l].bias;
        model.layers[l].weights -= lr * velocity[l].weights;
        model.layers[l].bias -= lr * velocity[l].bias;
      }
      ++step;
    }

    double epoch_objective = 0.0;
    try {
      epoch_objective = dataset_objective(model, data, e);
    } catch (const DomainError& err) {
      throw TrainingError("diverged after epoch " + std::to_string(epoch) + ": " + err.what());
    }
    if (!std::isfinite(epoch_objective)) {
      throw TrainingError("non-finite objective after epoch " + std::to_string(epoch));
    }
    trace.objective.push_back(epoch_objective);
    trace.train_accuracy.push_back(evaluate(model, data, objective).accuracy);
    if (test) trace.test_accuracy.push_back(evaluate(model, *test, objective).accuracy);
    if (config.snapshot_every > 0 && (epoch + 1) % config.snapshot_every == 0) {
      trace.snapshots.emplace_back(epoch + 1, model);
    }
  }
  return {std::move(model), std::move(trace)};
}

Evaluation evaluate(const NetworkModel& model, const LabeledDataset& data, const ObjectiveConfig& objective) {
  check_compatible(model, objective);
  check_data(model, data);
  PosteriorMatrix posterior = model_posterior(model, data.features());
  const Eigen::VectorXd rates = posterior_rates(objective, data.k());
  if (std::holds_alternative<PosteriorCorrection>(objective.correction)) {
    posterior = posterior_correct(posterior.values, rates);
  }
  const double acc = accuracy(predict(posterior), data.labels());
  return {acc, dataset_objective(model, data, training_rates(objective, data.k()))};
}

std::string serialize_model(const NetworkModel& model, const ObjectiveConfig& objective) {
  using detail::json;
  json layers = json::array();
  for (const auto& layer : model.layers) {
    layers.push_back({{"weights", detail::matrix_to_json(layer.weights)},
                      {"bias", detail::vector_to_json(layer.bias)}});
  }
  const json doc = {
      {"format", "fpml-model"},
      {"version", kModelFormatVersion},
      {"seed", model.seed},
      {"network",
       {{"layer_sizes", model.spec.layer_sizes},
        {"activation", std::string(to_string(model.spec.activation))},
        {"head", std::string(to_string(model.spec.head))},
        {"divergence", std::string(to_string(model.spec.divergence))}}},
      {"objective", detail::objective_to_json(objective)},
      {"layers", layers},
  };
  return doc.dump(2);
}

SavedModel deserialize_model(std::string_view text) {
  using detail::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& err) {
    throw ParseError(std::string("model file is not valid JSON: ") + err.what());
  }
  try {
    if (doc.value("format", "") != "fpml-model") throw ParseError("not an fpml model file");
    if (doc.at("version").get<int>() != kModelFormatVersion) throw ParseError("unsupported model format version");
    const auto& net = doc.at("network");
    MlpSpec spec;
    spec.layer_sizes = net.at("layer_sizes").get<std::vector<int>>();
    spec.activation = parse_activation(net.at("activation").get<std::string>());
    spec.head = parse_head(net.at("head").get<std::string>());
    spec.divergence = parse_divergence(net.at("divergence").get<std::string>());
    validate(spec);

    NetworkModel model{spec, doc.at("seed").get<std::uint64_t>(), {}};
    const auto& layers = doc.at("layers");
    if (layers.size() + 1 != spec.layer_sizes.size()) throw ParseError("layer count does not match layer_sizes");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      DenseLayer layer{detail::matrix_from_json(layers[l].at("weights")),
                       detail::vector_from_json(layers[l].at("bias"))};
      if (layer.weights.rows() != spec.layer_sizes[l + 1] || layer.weights.cols() != spec.layer_sizes[l] ||
          layer.bias.size() != spec.layer_sizes[l + 1]) {
        throw ParseError("layer " + std::to_string(l) + " has the wrong shape");
      }
      model.layers.push_back(std::move(layer));
    }
    return {std::move(model), detail::objective_from_json(doc.at("objective"))};
  } catch (const json::exception& err) {
    throw ParseError(std::string("malformed model file: ") + err.what());
  } catch (const ConfigError& err) {
    throw ParseError(std::string("malformed model file: ") + err.what());
  }
}

void save_model(const std::filesystem::path& path, const NetworkModel& model, const ObjectiveConfig& objective) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << serialize_model(model, objective) << '\n';
}

SavedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return deserialize_model(buffer.str());
}

}  // namespace fpml
