#pragma once

#include <iosfwd>

#include <Eigen/Core>

#include "fpml/divergence.hpp"
#include "fpml/noise.hpp"

namespace fpml {

/// Estimated p(y | x), one row per sample. Rows are not forced onto the
/// simplex unless `normalized` is set.
struct PosteriorMatrix {
  Eigen::MatrixXd values;
  bool normalized = false;
};

/// Elementwise (f*)'(T).
PosteriorMatrix estimate_posterior(const DivergenceSpec& spec, const Eigen::MatrixXd& t_outputs);

/// Rowwise argmax; ties go to the lowest class index.
template <typename Derived>
Eigen::VectorXi predict(const Eigen::MatrixBase<Derived>& p) {
  Eigen::VectorXi out(p.rows());
  for (Eigen::Index n = 0; n < p.rows(); ++n) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < p.cols(); ++j) {
      if (p(n, j) > p(n, best)) best = j;
    }
    out(n) = static_cast<int>(best);
  }
  return out;
}

inline Eigen::VectorXi predict(const PosteriorMatrix& p) { return predict(p.values); }

/// Limiting posterior learned from noisy labels: (1 - sum e) p_i + e_i.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> noisy_posterior_forward(
    const Eigen::MatrixBase<Derived>& clean_p, const Eigen::VectorXd& e) {
  using S = typename Derived::Scalar;
  check_offdiag_rates(e);
  if (clean_p.size() != e.size()) throw DimensionError("posterior and flip-rate lengths differ");
  const S scale = 1 - static_cast<S>(e.sum());
  Eigen::Matrix<S, Eigen::Dynamic, 1> out(clean_p.size());
  for (Eigen::Index i = 0; i < clean_p.size(); ++i) out(i) = scale * clean_p(i) + static_cast<S>(e(i));
  return out;
}

/// Subtracts e_i from column i. With `rescale`, rows are also divided by
/// (1 - sum e), which recovers the clean posterior scale; argmax is unchanged
/// either way. Negative entries are kept.
PosteriorMatrix posterior_correct(const Eigen::MatrixXd& noisy_p, const Eigen::VectorXd& e,
                                  bool rescale = false);

/// Reporting view: negatives clamped to zero, rows scaled to sum to one.
PosteriorMatrix normalized_for_report(const PosteriorMatrix& p);

/// Symmetric noise leaves the MAP decision unchanged iff eta < (K - 1) / K.
bool is_noise_tolerant_regime(int k, double eta);

double accuracy(const Eigen::VectorXi& predictions, const Eigen::VectorXi& labels);

/// One CSV row per sample, full double precision.
void write_posterior_csv(const PosteriorMatrix& p, std::ostream& out);

}  // namespace fpml
