#pragma once

#include <cmath>
#include <string_view>
#include <variant>

#include <Eigen/Core>

#include "fpml/divergence.hpp"
#include "fpml/errors.hpp"
#include "fpml/noise.hpp"

namespace fpml {

/// Output head of the network: raw conjugate-domain outputs T, or a positive
/// simplex row D with T = f'(D).
enum class Head { RawT, SimplexD };

Head parse_head(std::string_view name);
std::string_view to_string(Head head);

struct NoCorrection {};
/// Subtract the noise bias from the training objective.
struct ObjectiveCorrection {
  NoiseParams noise;
};
/// Subtract e_i from the estimated posterior at test time.
struct PosteriorCorrection {
  NoiseParams noise;
};

using Correction = std::variant<NoCorrection, ObjectiveCorrection, PosteriorCorrection>;

struct ObjectiveConfig {
  DivergenceId divergence = DivergenceId::KL;
  Correction correction = NoCorrection{};
  Head head = Head::RawT;
};

/// Throws unless any correction uses symmetric or uniform off-diagonal noise for K classes.
void validate(const ObjectiveConfig& config, int k);

/// Rates subtracted by the training objective: e for ObjectiveCorrection, zeros otherwise.
Eigen::VectorXd training_rates(const ObjectiveConfig& config, int k);

/// Rates subtracted from posteriors at evaluation: e for PosteriorCorrection, zeros otherwise.
Eigen::VectorXd posterior_rates(const ObjectiveConfig& config, int k);

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

namespace detail {

inline void check_label(Eigen::Index k, int label) {
  if (label < 0 || label >= k) throw ParameterError("label outside [0, K)");
}

inline void check_rates_size(Eigen::Index k, const Eigen::VectorXd& e) {
  if (e.size() != k) throw DimensionError("flip-rate vector length differs from K");
}

inline void check_batch(Eigen::Index rows, const Eigen::VectorXi& labels) {
  if (rows < 1) throw DimensionError("empty batch");
  if (labels.size() != rows) throw DimensionError("label count differs from batch size");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Raw-T objective: per sample  T(x, y) - sum_i f*(T(x, i)).
// ---------------------------------------------------------------------------

template <typename Derived>
typename Derived::Scalar jf_sample(const DivergenceSpec& spec, const Eigen::MatrixBase<Derived>& t,
                                   int label) {
  using S = typename Derived::Scalar;
  detail::check_label(t.size(), label);
  S conj_sum = 0;
  for (Eigen::Index i = 0; i < t.size(); ++i) conj_sum += fenchel_conjugate(spec, t(i));
  return t(label) - conj_sum;
}

/// Gradient of jf_sample: component i is 1{i = label} - (f*)'(T_i). Ascent direction.
template <typename Derived>
Vector<typename Derived::Scalar> jf_grad_sample(const DivergenceSpec& spec,
                                                const Eigen::MatrixBase<Derived>& t, int label) {
  using S = typename Derived::Scalar;
  detail::check_label(t.size(), label);
  Vector<S> g(t.size());
  for (Eigen::Index i = 0; i < t.size(); ++i) g(i) = -conj_prime(spec, t(i));
  g(label) += 1;
  return g;
}

/// Mean of jf_sample over the rows of an N x K output matrix.
template <typename Derived>
typename Derived::Scalar jf_batch(const DivergenceSpec& spec, const Eigen::MatrixBase<Derived>& t,
                                  const Eigen::VectorXi& labels) {
  using S = typename Derived::Scalar;
  detail::check_batch(t.rows(), labels);
  S total = 0;
  for (Eigen::Index n = 0; n < t.rows(); ++n) total += jf_sample(spec, t.row(n), labels(n));
  return total / static_cast<S>(t.rows());
}

// ---------------------------------------------------------------------------
// Noise bias for uniform off-diagonal flip rates e:
//   per sample  sum_j [ e_j T_j - (sum_i e_i) f*(T_j) ].
// ---------------------------------------------------------------------------

template <typename Derived>
typename Derived::Scalar bias_sample(const DivergenceSpec& spec, const Eigen::MatrixBase<Derived>& t,
                                     const Eigen::VectorXd& e) {
  using S = typename Derived::Scalar;
  detail::check_rates_size(t.size(), e);
  const S total_rate = static_cast<S>(e.sum());
  S value = 0;
  for (Eigen::Index j = 0; j < t.size(); ++j) {
    value += static_cast<S>(e(j)) * t(j) - total_rate * fenchel_conjugate(spec, t(j));
  }
  return value;
}

template <typename Derived>
Vector<typename Derived::Scalar> bias_grad_sample(const DivergenceSpec& spec,
                                                  const Eigen::MatrixBase<Derived>& t,
                                                  const Eigen::VectorXd& e) {
  using S = typename Derived::Scalar;
  detail::check_rates_size(t.size(), e);
  const S total_rate = static_cast<S>(e.sum());
  Vector<S> g(t.size());
  for (Eigen::Index j = 0; j < t.size(); ++j) {
    g(j) = static_cast<S>(e(j)) - total_rate * conj_prime(spec, t(j));
  }
  return g;
}

template <typename Derived>
typename Derived::Scalar bias_multiclass(const DivergenceSpec& spec,
                                         const Eigen::MatrixBase<Derived>& t,
                                         const Eigen::VectorXd& e) {
  using S = typename Derived::Scalar;
  check_offdiag_rates(e);
  if (t.rows() < 1) throw DimensionError("empty batch");
  S total = 0;
  for (Eigen::Index n = 0; n < t.rows(); ++n) total += bias_sample(spec, t.row(n), e);
  return total / static_cast<S>(t.rows());
}

/// Binary bias with e0 = P(noisy 0 | clean 1), e1 = P(noisy 1 | clean 0).
template <typename Derived>
typename Derived::Scalar bias_binary(const DivergenceSpec& spec, const Eigen::MatrixBase<Derived>& t,
                                     double e0, double e1) {
  if (t.cols() != 2) throw DimensionError("binary bias needs N x 2 outputs");
  return bias_multiclass(spec, t, Eigen::Vector2d(e0, e1));
}

// Corrected objective: noisy objective minus the bias estimated on the same batch.

template <typename Derived>
typename Derived::Scalar corrected_jf_sample(const DivergenceSpec& spec,
                                             const Eigen::MatrixBase<Derived>& t, int label,
                                             const Eigen::VectorXd& e) {
  const auto value = jf_sample(spec, t, label);
  return value - bias_sample(spec, t, e);
}

template <typename Derived>
Vector<typename Derived::Scalar> corrected_grad_sample(const DivergenceSpec& spec,
                                                       const Eigen::MatrixBase<Derived>& t, int label,
                                                       const Eigen::VectorXd& e) {
  Vector<typename Derived::Scalar> g = jf_grad_sample(spec, t, label);
  g -= bias_grad_sample(spec, t, e);
  return g;
}

template <typename Derived>
typename Derived::Scalar corrected_jf_batch(const DivergenceSpec& spec,
                                            const Eigen::MatrixBase<Derived>& t,
                                            const Eigen::VectorXi& labels, const Eigen::VectorXd& e) {
  const auto value = jf_batch(spec, t, labels);
  return value - bias_multiclass(spec, t, e);
}

// ---------------------------------------------------------------------------
// Active / passive split of the per-sample objective.
// ---------------------------------------------------------------------------

template <typename Scalar>
struct ActivePassive {
  Scalar active;   // T_y - f*(T_y): label coordinate only
  Scalar passive;  // -sum_{i != y} f*(T_i): other coordinates only
};

template <typename Derived>
ActivePassive<typename Derived::Scalar> active_passive_split(const DivergenceSpec& spec,
                                                             const Eigen::MatrixBase<Derived>& t,
                                                             int label) {
  using S = typename Derived::Scalar;
  detail::check_label(t.size(), label);
  S passive = 0;
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    if (i != label) passive -= fenchel_conjugate(spec, t(i));
  }
  return {t(label) - fenchel_conjugate(spec, t(label)), passive};
}

// ---------------------------------------------------------------------------
// Simplex-head objectives after the change of variable T = f'(D).
// ---------------------------------------------------------------------------

namespace detail {

template <typename Derived>
void check_positive_row(const Eigen::MatrixBase<Derived>& d) {
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (!(d(i) > 0) || !std::isfinite(d(i))) throw DomainError("simplex head outputs must be positive");
  }
}

}  // namespace detail

/// log(D_y) - 1: the KL objective on the simplex, i.e. negative cross-entropy minus one.
template <typename Derived>
typename Derived::Scalar jf_simplex_kl(const Eigen::MatrixBase<Derived>& d, int label) {
  using S = typename Derived::Scalar;
  detail::check_label(d.size(), label);
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (!(d(i) >= 0) || !std::isfinite(d(i))) throw DomainError("simplex row has a negative entry");
  }
  if (std::abs(d.sum() - S(1)) > S(1e-9)) throw DomainError("row is not on the probability simplex");
  if (!(d(label) > 0)) throw DomainError("KL simplex objective needs D_label > 0");
  return std::log(d(label)) - 1;
}

template <typename Derived>
typename Derived::Scalar jf_simplex_gan(const Eigen::MatrixBase<Derived>& d, int label) {
  using S = typename Derived::Scalar;
  detail::check_label(d.size(), label);
  detail::check_positive_row(d);
  S value = std::log(d(label) / (d(label) + 1));
  for (Eigen::Index i = 0; i < d.size(); ++i) value -= std::log1p(d(i));
  return value;
}

template <typename Derived>
typename Derived::Scalar jf_simplex_sl(const Eigen::MatrixBase<Derived>& d, int label) {
  using S = typename Derived::Scalar;
  detail::check_label(d.size(), label);
  detail::check_positive_row(d);
  S value = -1 / (d(label) + 1);
  for (Eigen::Index i = 0; i < d.size(); ++i) value += -1 / (d(i) + 1) - std::log1p(d(i));
  return value;
}

template <typename Derived>
typename Derived::Scalar jf_simplex(const DivergenceSpec& spec, const Eigen::MatrixBase<Derived>& d,
                                    int label) {
  switch (spec.id) {
    case DivergenceId::KL: return jf_simplex_kl(d, label);
    case DivergenceId::GAN: return jf_simplex_gan(d, label);
    case DivergenceId::SL: return jf_simplex_sl(d, label);
  }
  throw ParameterError("invalid divergence id");
}

/// Gradient of jf_simplex with respect to D.
template <typename Derived>
Vector<typename Derived::Scalar> jf_simplex_grad(const DivergenceSpec& spec,
                                                 const Eigen::MatrixBase<Derived>& d, int label) {
  using S = typename Derived::Scalar;
  detail::check_label(d.size(), label);
  detail::check_positive_row(d);
  Vector<S> g(d.size());
  switch (spec.id) {
    case DivergenceId::KL:
      g.setZero();
      g(label) = 1 / d(label);
      break;
    case DivergenceId::GAN:
      for (Eigen::Index i = 0; i < d.size(); ++i) g(i) = -1 / (d(i) + 1);
      g(label) += 1 / (d(label) * (d(label) + 1));
      break;
    case DivergenceId::SL:
      for (Eigen::Index i = 0; i < d.size(); ++i) {
        const S a = 1 / (d(i) + 1);
        g(i) = a * a - a;
      }
      g(label) += 1 / ((d(label) + 1) * (d(label) + 1));
      break;
  }
  return g;
}

/// Simplex objective minus the noise bias evaluated at T = f'(D).
template <typename Derived>
typename Derived::Scalar corrected_simplex_sample(const DivergenceSpec& spec,
                                                  const Eigen::MatrixBase<Derived>& d, int label,
                                                  const Eigen::VectorXd& e) {
  const auto value = jf_simplex(spec, d, label);
  return value - bias_sample(spec, optimal_T_from_posterior(spec, d.derived()), e);
}

template <typename Derived>
Vector<typename Derived::Scalar> corrected_simplex_grad(const DivergenceSpec& spec,
                                                        const Eigen::MatrixBase<Derived>& d, int label,
                                                        const Eigen::VectorXd& e) {
  using S = typename Derived::Scalar;
  detail::check_rates_size(d.size(), e);
  Vector<S> g = jf_simplex_grad(spec, d, label);
  const S total_rate = static_cast<S>(e.sum());
  Vector<S> bias_grad(d.size());
  // d/dD_j bias(f'(D)) = (e_j - sum(e) (f*)'(f'(D_j))) f''(D_j), and (f*)'(f'(D)) = D.
  for (Eigen::Index j = 0; j < d.size(); ++j) {
    bias_grad(j) = (static_cast<S>(e(j)) - total_rate * d(j)) * generator_second(spec, d(j));
  }
  g -= bias_grad;
  return g;
}

/// Value and gradient (w.r.t. the head outputs) of the training objective for one sample.
struct SampleObjective {
  double value;
  Eigen::VectorXd gradient;
};

SampleObjective head_objective(const DivergenceSpec& spec, Head head, const Eigen::VectorXd& row,
                               int label, const Eigen::VectorXd& e);

// ---------------------------------------------------------------------------
// Exact expectations on a finite support.
// ---------------------------------------------------------------------------

/// Joint pmf p(x_m, y = j) on M support points and K classes.
class DiscreteJoint {
 public:
  explicit DiscreteJoint(Eigen::MatrixXd pmf);

  int m() const { return static_cast<int>(pmf_.rows()); }
  int k() const { return static_cast<int>(pmf_.cols()); }
  const Eigen::MatrixXd& pmf() const { return pmf_; }
  Eigen::VectorXd p_x() const { return pmf_.rowwise().sum(); }
  Eigen::VectorXd p_y() const { return pmf_.colwise().sum().transpose(); }
  /// p(y | x_m), M x K.
  Eigen::MatrixXd posterior() const;
  /// Joint of (X, noisy label): p(x, j) = sum_i p(x, i) tm(i, j).
  DiscreteJoint noisy(const TransitionMatrix& tm) const;

 private:
  Eigen::MatrixXd pmf_;
};

/// sum_{m,j} p(x_m, j) T(m, j) - sum_m p(x_m) sum_j f*(T(m, j)), no sampling.
double exact_jf(const DivergenceSpec& spec, const DiscreteJoint& joint, const Eigen::MatrixXd& t_table);
double exact_jf_noisy(const DivergenceSpec& spec, const DiscreteJoint& joint, const TransitionMatrix& tm,
                      const Eigen::MatrixXd& t_table);
/// p_X-weighted bias_sample.
double exact_bias(const DivergenceSpec& spec, const DiscreteJoint& joint, const Eigen::MatrixXd& t_table,
                  const Eigen::VectorXd& e);

}  // namespace fpml
