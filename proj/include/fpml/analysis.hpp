#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fpml/divergence.hpp"
#include "fpml/model.hpp"
#include "fpml/noise.hpp"
#include "fpml/objective.hpp"

namespace fpml {

// ---------------------------------------------------------------------------
// Per-point optimum on a finite support.
// ---------------------------------------------------------------------------

struct GoldenSectionResult {
  double argmax;
  double value;
  int iterations;
};

/// Maximizes a unimodal function on [lo, hi] until the bracket is narrower than tol.
GoldenSectionResult golden_section_maximize(const std::function<double(double)>& g, double lo, double hi,
                                            double tol = 1e-10);

/// argmax_T c1 * T - c2 * f*(T) for c2 > 0, found numerically. The bracket
/// starts at guess -/+ 1 and grows until the derivative changes sign.
double maximize_concave_term(const DivergenceSpec& spec, double c1, double c2, double guess,
                             double tol = 1e-10);

struct OptimalTSolution {
  Eigen::MatrixXd closed_form;  // f'((1 - sum e) p(y|x) + e)
  Eigen::MatrixXd numeric;      // golden-section maximizer of each (x, j) term
  double max_posterior_gap;     // max |(f*)'(closed) - (f*)'(numeric)|
};

/// Optimal T table (M x K) for the clean joint, or for the joint seen through
/// `tm` when given. `tm` must be uniform off-diagonal.
OptimalTSolution solve_optimal_T_discrete(const DivergenceSpec& spec, const DiscreteJoint& joint,
                                          const std::optional<TransitionMatrix>& tm = std::nullopt);

// ---------------------------------------------------------------------------
// Bias near convergence.
// ---------------------------------------------------------------------------

/// ||T_star - T_i||_2 * ||(f*)''(T_i)||_2.
double taylor_bias_bound(const DivergenceSpec& spec, const Eigen::VectorXd& t_star, const Eigen::VectorXd& t_i);

/// |sum_j ((f*)'(T_star_j) - (f*)'(T_i_j))|, the first-order posterior shift
/// the bound is compared against.
double posterior_shift(const DivergenceSpec& spec, const Eigen::VectorXd& t_star, const Eigen::VectorXd& t_i);

/// Component j: (sum e) p_star_j - e_j + delta_j (f*)''(T_noisy_j - delta_j).
Eigen::VectorXd training_bias_expression(const DivergenceSpec& spec, const Eigen::VectorXd& p_star,
                                         const Eigen::VectorXd& e, const Eigen::VectorXd& delta,
                                         const Eigen::VectorXd& t_star_noisy);

/// p_star - (f*)'(T_noisy - delta), evaluated directly.
Eigen::VectorXd direct_training_bias(const DivergenceSpec& spec, const Eigen::VectorXd& p_star,
                                     const Eigen::VectorXd& delta, const Eigen::VectorXd& t_star_noisy);

/// Distance of one iterate from the noisy optimum, row by row.
struct ConvergenceRecord {
  int iteration;
  Eigen::MatrixXd t_table;
  Eigen::MatrixXd posterior;      // (f*)'(T)
  Eigen::MatrixXd deltas;         // T_star - T
  Eigen::VectorXd bound;          // taylor_bias_bound per row
  Eigen::VectorXd empirical_bias; // posterior_shift per row
};

ConvergenceRecord convergence_record(const DivergenceSpec& spec, int iteration, const Eigen::MatrixXd& t_table,
                                     const Eigen::MatrixXd& t_star_table);

/// One record per training snapshot, with T read from the network on `x`
/// (T = f'(D) for a simplex head).
std::vector<ConvergenceRecord> convergence_records(const TrainTrace& trace, const Eigen::MatrixXd& x,
                                                   const Eigen::MatrixXd& t_star_table);

// ---------------------------------------------------------------------------
// Random inputs for the property checks.
// ---------------------------------------------------------------------------

/// Dirichlet(1) draw on the K-simplex.
Eigen::VectorXd random_simplex(int k, std::mt19937_64& rng);

/// Dirichlet(1) draw whose two largest entries differ by at least `margin`.
Eigen::VectorXd random_simplex_unique_argmax(int k, std::mt19937_64& rng, double margin = 1e-9);

/// Random joint pmf on M points and K classes with every entry positive.
DiscreteJoint random_discrete_joint(int m, int k, std::mt19937_64& rng);

/// Flip rates with sum(e) drawn uniformly from [0, max_total).
Eigen::VectorXd random_offdiag_rates(int k, std::mt19937_64& rng, double max_total = 0.9);

/// T = f'(u) with u uniform in (0.01, 2): always inside the conjugate domain.
Eigen::MatrixXd random_t_table(const DivergenceSpec& spec, int rows, int k, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Theorem checks.
// ---------------------------------------------------------------------------

struct TheoremReport {
  std::string theorem_id;
  long trials;
  double max_error;
  double threshold;
  bool pass;
};

/// Bias used by the exact-identity checks; replaceable to test that a wrong
/// formula is caught.
using BiasFunction = std::function<double(const DivergenceSpec&, const DiscreteJoint&, const Eigen::MatrixXd&,
                                          const Eigen::VectorXd&)>;

struct VerifyOptions {
  std::uint64_t seed = 0;
  BiasFunction bias;  // empty: exact_bias
};

// Each check covers all three divergences and reports the worst one.
TheoremReport check_noisy_identity(int k, long trials_per_divergence, std::uint64_t seed,
                                   const BiasFunction& bias = {});
TheoremReport check_closed_form_optimum(int k, long trials_per_divergence, std::uint64_t seed);
TheoremReport check_argmax_invariance(long samples_per_setting, std::uint64_t seed);
TheoremReport check_posterior_correction(long trials, std::uint64_t seed);
TheoremReport check_bias_bound(long trials_per_divergence, std::uint64_t seed);
TheoremReport check_bias_order(long trials_per_divergence, std::uint64_t seed);

std::vector<TheoremReport> verify_theorems(const VerifyOptions& options = {});
/// Runs the suite and writes the reports as JSON to `report_path` (skipped when empty).
std::vector<TheoremReport> verify_theorems(std::uint64_t seed, const std::filesystem::path& report_path);

void write_reports_json(const std::vector<TheoremReport>& reports, std::ostream& out);

}  // namespace fpml
