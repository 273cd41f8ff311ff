#include "fpml/posterior.hpp"

#include <ostream>

namespace fpml {

PosteriorMatrix estimate_posterior(const DivergenceSpec& spec, const Eigen::MatrixXd& t_outputs) {
  return {conj_prime(spec, t_outputs), false};
}

PosteriorMatrix posterior_correct(const Eigen::MatrixXd& noisy_p, const Eigen::VectorXd& e, bool rescale) {
  check_offdiag_rates(e);
  if (noisy_p.cols() != e.size()) throw DimensionError("posterior width differs from flip-rate length");
  Eigen::MatrixXd corrected = noisy_p.rowwise() - e.transpose();
  if (rescale) corrected /= (1.0 - e.sum());
  return {std::move(corrected), false};
}

PosteriorMatrix normalized_for_report(const PosteriorMatrix& p) {
  Eigen::MatrixXd values = p.values.cwiseMax(0.0);
  for (Eigen::Index n = 0; n < values.rows(); ++n) {
    const double total = values.row(n).sum();
    if (total > 0.0) {
      values.row(n) /= total;
    } else {
      values.row(n).setConstant(1.0 / static_cast<double>(values.cols()));
    }
  }
  return {std::move(values), true};
}

bool is_noise_tolerant_regime(int k, double eta) {
  if (k < 2) throw ParameterError("noise tolerance needs K >= 2");
  if (!(eta >= 0.0)) throw ParameterError("noise rate must be non-negative");
  return eta < static_cast<double>(k - 1) / k;
}

double accuracy(const Eigen::VectorXi& predictions, const Eigen::VectorXi& labels) {
  if (predictions.size() != labels.size()) throw DimensionError("prediction and label counts differ");
  if (labels.size() == 0) throw DimensionError("accuracy of an empty set");
  return static_cast<double>((predictions.array() == labels.array()).count()) /
         static_cast<double>(labels.size());
}

void write_posterior_csv(const PosteriorMatrix& p, std::ostream& out) {
  const auto old_precision = out.precision(17);
  for (Eigen::Index n = 0; n < p.values.rows(); ++n) {
    for (Eigen::Index j = 0; j < p.values.cols(); ++j) out << (j ? "," : "") << p.values(n, j);
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace fpml
