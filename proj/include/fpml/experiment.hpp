#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "fpml/divergence.hpp"
#include "fpml/model.hpp"
#include "fpml/noise.hpp"
#include "fpml/objective.hpp"

namespace fpml {

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// Comma-separated rows, label in the last column. A first line that does not
/// parse as numbers is taken as a header. K = max label + 1.
LabeledDataset parse_csv(std::istream& in);
LabeledDataset read_csv(const std::filesystem::path& path);
void write_csv(const LabeledDataset& data, std::ostream& out);

struct DatasetSplit {
  LabeledDataset train;
  LabeledDataset test;
  Eigen::RowVectorXd mean;   // training-split column means
  Eigen::RowVectorXd scale;  // training-split column std (1 where it is zero)
};

/// Seeded permutation split with round(test_fraction * N) test rows (at least
/// one of each), then per-column standardization using training statistics.
DatasetSplit split_and_standardize(const LabeledDataset& data, std::uint64_t seed, double test_fraction = 0.2);

DatasetSplit load_csv(const std::filesystem::path& path, std::uint64_t seed, double test_fraction = 0.2);

struct SyntheticDataset {
  LabeledDataset data;
  Eigen::MatrixXd means;            // K x d
  Eigen::MatrixXd bayes_posterior;  // N x K
};

/// Balanced mixture of unit-variance spherical Gaussians. Neighbouring class
/// means are `separation` apart, placed in a seeded random orthonormal frame.
SyntheticDataset make_synthetic(int k, int n, int d, double separation, std::uint64_t seed);

/// Exact p(y | x) for equal-weight unit-variance Gaussians with the given means.
Eigen::MatrixXd gaussian_bayes_posterior(const Eigen::MatrixXd& means, const Eigen::MatrixXd& x);

/// Bayes accuracy of two unit-variance Gaussians whose means are `separation` apart.
double two_class_bayes_accuracy(double separation);

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

enum class RunMode { NoNoise, NoCorrection, ObjectiveCorrection, PosteriorCorrection };

RunMode parse_run_mode(std::string_view name);
std::string_view to_string(RunMode mode);
/// Table column title, e.g. "No Cor.".
std::string_view column_title(RunMode mode);

struct SyntheticSource {
  int k = 2;
  int n = 1000;
  int d = 2;
  double separation = 3.0;
  std::uint64_t seed = 0;
};

struct CsvSource {
  std::filesystem::path path;
};

struct ExperimentConfig {
  std::variant<SyntheticSource, CsvSource> dataset = SyntheticSource{};
  double test_fraction = 0.2;

  std::vector<int> hidden = {32};
  Activation activation = Activation::Relu;
  std::optional<Head> head;  // empty: RawT for K = 2, SimplexD otherwise

  std::vector<DivergenceId> divergences = {DivergenceId::KL};
  std::vector<RunMode> modes = {RunMode::NoNoise, RunMode::NoCorrection, RunMode::ObjectiveCorrection,
                                RunMode::PosteriorCorrection};
  std::optional<NoiseParams> noise;  // empty: clean training labels

  TrainConfig train;
  std::vector<std::uint64_t> seeds = {0};

  std::filesystem::path output;
  std::string format = "table";
};

/// JSON config with sections dataset, model, objective, noise, train, output.
/// Unknown keys and missing files raise ConfigError. Relative dataset paths
/// resolve against `base_dir` when it is given.
ExperimentConfig parse_experiment_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
void validate(const ExperimentConfig& config);

struct ResultRecord {
  std::uint64_t seed;
  std::string divergence;
  std::string noise;
  std::string mode;
  double test_accuracy;
  double train_accuracy;
  double final_objective;
  double seconds;
};

/// Training and test splits for one seed. The test split is never corrupted.
struct PreparedData {
  LabeledDataset clean_train;
  LabeledDataset noisy_train;
  LabeledDataset test;
};

PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t seed);

/// Seed used for label corruption, derived from the run seed and the noise seed.
std::uint64_t corruption_seed(std::uint64_t run_seed, std::uint64_t noise_seed);

/// Noise model handed to the corrections: the configured noise, a custom
/// matrix reduced to its off-diagonal rates, or zero rates without noise.
NoiseParams correction_noise(const ExperimentConfig& config, int k);

/// Network shape for `config` on K classes and D features.
MlpSpec network_spec(const ExperimentConfig& config, DivergenceId divergence, int d, int k);

/// One record per (seed, divergence, mode), in that nesting order.
std::vector<ResultRecord> run_experiment(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------

void write_records_csv(const std::vector<ResultRecord>& records, std::ostream& out);
std::vector<ResultRecord> read_records_csv(std::istream& in);
void write_records_json(const std::vector<ResultRecord>& records, std::ostream& out);
std::vector<ResultRecord> read_records_json(std::istream& in);
/// Reads either format, chosen by the first non-blank character.
std::vector<ResultRecord> read_records(const std::filesystem::path& path);

struct SummaryRow {
  std::string divergence;
  std::string noise;
  std::string mode;
  long runs;
  double mean_test_accuracy;
  double std_test_accuracy;  // sample std; 0 for a single run
};

/// Groups by (divergence, noise, mode) in order of first appearance.
std::vector<SummaryRow> summarize(const std::vector<ResultRecord>& records);

enum class ReportFormat { Csv, Json, Table };
ReportFormat parse_report_format(std::string_view name);

/// Summary in the requested format. The table has one row per (divergence,
/// noise) and the columns No Cor. | O.F. Cor. | P. Cor. | No Noise.
std::string report(const std::vector<ResultRecord>& records, ReportFormat format);

}  // namespace fpml
