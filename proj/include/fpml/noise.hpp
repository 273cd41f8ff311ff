#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include <Eigen/Core>

#include "fpml/errors.hpp"

namespace fpml {

/// Tolerance on row sums of a transition matrix.
inline constexpr double kRowSumTolerance = 1e-12;

/// K x K row-stochastic matrix, entry (i, j) = P(noisy = j | clean = i).
/// Validated on construction and immutable afterwards.
class TransitionMatrix {
 public:
  explicit TransitionMatrix(Eigen::MatrixXd entries);

  int k() const { return static_cast<int>(entries_.rows()); }
  const Eigen::MatrixXd& entries() const { return entries_; }
  double operator()(int i, int j) const { return entries_(i, j); }

  /// Flip rates e_j when every off-diagonal entry of column j equals e_j
  /// (within `tol`); nullopt otherwise.
  std::optional<Eigen::VectorXd> offdiag_rates(double tol = 1e-12) const;

 private:
  Eigen::MatrixXd entries_;
};

TransitionMatrix symmetric_matrix(int k, double eta);
TransitionMatrix uniform_offdiag_matrix(const Eigen::VectorXd& e);

enum class FixtureMatrix { Cifar10Low, Cifar10High };

/// The 10-class uniform off-diagonal CIFAR-10 matrices (low and high noise).
TransitionMatrix fixture_matrix(FixtureMatrix name);
FixtureMatrix parse_fixture(std::string_view name);

/// Throws ParameterError unless e_j >= 0 (finite) and sum(e) < 1.
void check_offdiag_rates(const Eigen::VectorXd& e);

struct SymmetricNoise {
  double eta = 0.0;
};

struct UniformOffDiagonalNoise {
  Eigen::VectorXd e;
};

struct CustomNoise {
  TransitionMatrix matrix;
};

struct NoiseParams {
  std::variant<SymmetricNoise, UniformOffDiagonalNoise, CustomNoise> kind;
  std::uint64_t seed = 0;
};

TransitionMatrix transition_matrix(const NoiseParams& params, int k);

/// Per-class flip rates e for the correction formulas. Symmetric noise expands
/// to e_j = eta / (K - 1). Custom matrices are rejected.
Eigen::VectorXd offdiag_rates(const NoiseParams& params, int k);

/// Short human-readable descriptor, e.g. "sym(0.3)" or "uod(0.1,0.3)".
std::string describe(const NoiseParams& params);

/// Features plus integer labels in [0, k). `provenance` is empty for clean data
/// and holds the noise model for corrupted data.
class LabeledDataset {
 public:
  LabeledDataset(Eigen::MatrixXd features, Eigen::VectorXi labels, int k,
                 std::optional<NoiseParams> provenance = std::nullopt);

  const Eigen::MatrixXd& features() const { return features_; }
  const Eigen::VectorXi& labels() const { return labels_; }
  int k() const { return k_; }
  Eigen::Index size() const { return features_.rows(); }
  Eigen::Index dim() const { return features_.cols(); }
  bool is_clean() const { return !provenance_.has_value(); }
  const std::optional<NoiseParams>& provenance() const { return provenance_; }

 private:
  Eigen::MatrixXd features_;
  Eigen::VectorXi labels_;
  int k_;
  std::optional<NoiseParams> provenance_;
};

/// Uniform double in [0, 1) that depends only on (seed, index).
double counter_uniform(std::uint64_t seed, std::uint64_t index);

/// Draws every label from its row of `tm`. Draw n uses counter_uniform(seed, n),
/// so the result does not depend on processing order.
LabeledDataset corrupt(const LabeledDataset& ds, const TransitionMatrix& tm, std::uint64_t seed);
LabeledDataset corrupt(const LabeledDataset& ds, const NoiseParams& params);

/// Row-normalized (clean -> noisy) count matrix. Rows with no samples are
/// one-hot on the diagonal.
TransitionMatrix empirical_transition(const LabeledDataset& clean, const LabeledDataset& noisy);

TransitionMatrix parse_transition_csv(std::istream& in);
TransitionMatrix read_transition_csv(const std::filesystem::path& path);
void write_transition_csv(const TransitionMatrix& tm, std::ostream& out);

}  // namespace fpml
