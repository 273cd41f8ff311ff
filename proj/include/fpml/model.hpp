#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fpml/divergence.hpp"
#include "fpml/noise.hpp"
#include "fpml/objective.hpp"
#include "fpml/posterior.hpp"

namespace fpml {

enum class Activation { Relu, Tanh };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation activation);

/// Fully connected network: layer_sizes = {D, hidden..., K}. Two entries give
/// a linear model. `divergence` picks the link of a RawT head.
struct MlpSpec {
  std::vector<int> layer_sizes;
  Activation activation = Activation::Relu;
  Head head = Head::RawT;
  DivergenceId divergence = DivergenceId::KL;
};

void validate(const MlpSpec& spec);

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;
};

struct NetworkModel {
  MlpSpec spec;
  std::uint64_t seed = 0;
  std::vector<DenseLayer> layers;

  int input_dim() const { return spec.layer_sizes.front(); }
  int output_dim() const { return spec.layer_sizes.back(); }
};

/// Weights ~ U(-sqrt(6 / fan_in), sqrt(6 / fan_in)), zero biases.
NetworkModel init(const MlpSpec& spec, std::uint64_t seed);

// RawT links from the last linear output v into the conjugate domain:
//   KL:  t = v
//   GAN: t = -softplus(-v)            in (-inf, 0)
//   SL:  t = -1 / (1 + softplus(v))   in (-1, 0)
double raw_link(DivergenceId id, double v);
double raw_link_derivative(DivergenceId id, double v);

/// Head outputs, N x K: T for a RawT head, softmax rows D for a SimplexD head.
Eigen::MatrixXd forward(const NetworkModel& model, const Eigen::MatrixXd& x);

/// Posterior estimate from the head, before any posterior correction.
PosteriorMatrix model_posterior(const NetworkModel& model, const Eigen::MatrixXd& x);

struct ObjectiveGradient {
  double value;                    // mean objective over the batch
  std::vector<DenseLayer> layers;  // d value / d parameters, same shapes as the model
};

/// Mean training objective (bias-corrected with rates `e`; pass zeros for the
/// plain objective) and its exact parameter gradient via backpropagation.
ObjectiveGradient objective_and_gradient(const NetworkModel& model, const Eigen::MatrixXd& x,
                                         const Eigen::VectorXi& labels, const Eigen::VectorXd& e);

Eigen::VectorXd flatten_parameters(const NetworkModel& model);
Eigen::VectorXd flatten_gradient(const ObjectiveGradient& gradient);
void assign_parameters(NetworkModel& model, const Eigen::VectorXd& flat);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 32;
  double lr0 = 0.02;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  int snapshot_every = 0;  // 0 disables snapshots
};

void validate(const TrainConfig& config);

/// Cosine annealing from lr0 at step 0 to zero at step total_steps - 1.
double cosine_lr(double lr0, long step, long total_steps);

struct TrainTrace {
  std::vector<double> objective;        // full-dataset objective after each epoch
  std::vector<double> train_accuracy;   // against the (possibly noisy) training labels
  std::vector<double> test_accuracy;    // empty without a test set
  std::vector<std::pair<int, NetworkModel>> snapshots;  // (epoch, parameters)
};

struct TrainResult {
  NetworkModel model;
  TrainTrace trace;
};

/// Mini-batch ascent with SGD + momentum and a cosine-annealed step size.
/// ObjectiveCorrection subtracts the bias on every batch; PosteriorCorrection
/// only affects evaluation.
TrainResult train(NetworkModel model, const LabeledDataset& data, const ObjectiveConfig& objective,
                  const TrainConfig& config, const LabeledDataset* test = nullptr);

struct Evaluation {
  double accuracy;
  double mean_objective;
};

Evaluation evaluate(const NetworkModel& model, const LabeledDataset& data, const ObjectiveConfig& objective);

/// Throws ParameterError when the model head or link does not match the objective.
void check_compatible(const NetworkModel& model, const ObjectiveConfig& objective);

struct SavedModel {
  NetworkModel model;
  ObjectiveConfig objective;
};

inline constexpr int kModelFormatVersion = 1;

std::string serialize_model(const NetworkModel& model, const ObjectiveConfig& objective);
SavedModel deserialize_model(std::string_view text);
void save_model(const std::filesystem::path& path, const NetworkModel& model, const ObjectiveConfig& objective);
SavedModel load_model(const std::filesystem::path& path);

}  // namespace fpml
