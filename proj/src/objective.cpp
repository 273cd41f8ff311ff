#include "fpml/objective.hpp"

#include <algorithm>
#include <cctype>
#include <string>

namespace fpml {

Head parse_head(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "raw" || lower == "rawt" || lower == "raw_t") return Head::RawT;
  if (lower == "simplex" || lower == "simplexd" || lower == "simplex_d") return Head::SimplexD;
  throw ParameterError("unknown head '" + std::string(name) + "' (expected raw or simplex)");
}

std::string_view to_string(Head head) { return head == Head::RawT ? "raw" : "simplex"; }

void validate(const ObjectiveConfig& config, int k) {
  training_rates(config, k);
  posterior_rates(config, k);
}

Eigen::VectorXd training_rates(const ObjectiveConfig& config, int k) {
  if (const auto* c = std::get_if<ObjectiveCorrection>(&config.correction)) return offdiag_rates(c->noise, k);
  return Eigen::VectorXd::Zero(k);
}

Eigen::VectorXd posterior_rates(const ObjectiveConfig& config, int k) {
  if (const auto* c = std::get_if<PosteriorCorrection>(&config.correction)) return offdiag_rates(c->noise, k);
  return Eigen::VectorXd::Zero(k);
}

SampleObjective head_objective(const DivergenceSpec& spec, Head head, const Eigen::VectorXd& row, int label,
                               const Eigen::VectorXd& e) {
  if (head == Head::RawT) {
    return {corrected_jf_sample(spec, row, label, e), corrected_grad_sample(spec, row, label, e)};
  }
  return {corrected_simplex_sample(spec, row, label, e), corrected_simplex_grad(spec, row, label, e)};
}

DiscreteJoint::DiscreteJoint(Eigen::MatrixXd pmf) : pmf_(std::move(pmf)) {
  if (pmf_.rows() < 1 || pmf_.cols() < 2) throw DimensionError("joint needs M >= 1 points and K >= 2 classes");
  if (!pmf_.allFinite() || (pmf_.array() < 0.0).any()) throw ParameterError("joint pmf entries must be >= 0");
  if (std::abs(pmf_.sum() - 1.0) > 1e-12) throw ParameterError("joint pmf must sum to one");
  if ((pmf_.rowwise().sum().array() <= 0.0).any()) throw ParameterError("every support point needs p(x) > 0");
}

Eigen::MatrixXd DiscreteJoint::posterior() const {
  const Eigen::VectorXd px = p_x();
  return px.cwiseInverse().asDiagonal() * pmf_;
}

DiscreteJoint DiscreteJoint::noisy(const TransitionMatrix& tm) const {
  if (tm.k() != k()) throw DimensionError("transition matrix size differs from K");
  return DiscreteJoint(pmf_ * tm.entries());
}

double exact_jf(const DivergenceSpec& spec, const DiscreteJoint& joint, const Eigen::MatrixXd& t_table) {
  if (t_table.rows() != joint.m() || t_table.cols() != joint.k()) {
    throw DimensionError("T table must be M x K");
  }
  const Eigen::MatrixXd conj = fenchel_conjugate(spec, t_table);
  const double label_term = joint.pmf().cwiseProduct(t_table).sum();
  const double conj_term = joint.p_x().dot(conj.rowwise().sum());
  return label_term - conj_term;
}

double exact_jf_noisy(const DivergenceSpec& spec, const DiscreteJoint& joint, const TransitionMatrix& tm,
                      const Eigen::MatrixXd& t_table) {
  return exact_jf(spec, joint.noisy(tm), t_table);
}

double exact_bias(const DivergenceSpec& spec, const DiscreteJoint& joint, const Eigen::MatrixXd& t_table,
                  const Eigen::VectorXd& e) {
  if (t_table.rows() != joint.m() || t_table.cols() != joint.k()) {
    throw DimensionError("T table must be M x K");
  }
  check_offdiag_rates(e);
  const Eigen::VectorXd px = joint.p_x();
  double total = 0.0;
  for (int m = 0; m < joint.m(); ++m) total += px(m) * bias_sample(spec, t_table.row(m), e);
  return total;
}

}  // namespace fpml
