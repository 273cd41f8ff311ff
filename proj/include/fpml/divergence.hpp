#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "fpml/errors.hpp"

namespace fpml {

enum class DivergenceId { KL, GAN, SL };

/// Parses "kl" | "gan" | "sl" (case-insensitive). Throws ParameterError otherwise.
DivergenceId parse_divergence(std::string_view name);
std::string_view to_string(DivergenceId id);

/// Open interval (lo, hi); either end may be infinite.
struct OpenInterval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  template <std::floating_point Scalar>
  bool contains(Scalar t) const {
    return std::isfinite(t) && static_cast<double>(t) > lo && static_cast<double>(t) < hi;
  }
};

/**
 * Generator f of an f-divergence together with its derivatives, its Fenchel
 * conjugate f* and the conjugate's first two derivatives.
 *
 * Member functions are the raw closed forms and do no domain checking; use the
 * free functions below (eval_generator, fenchel_conjugate, conj_prime, ...)
 * for checked evaluation.
 *
 *   KL : f(u) = u log u,                  f*(t) = exp(t - 1),          t in R
 *   GAN: f(u) = u log u - (u+1) log(u+1), f*(t) = -log(1 - exp(t)),    t < 0
 *   SL : f(u) = -log(u + 1),              f*(t) = -(log(-t) + t),      -1 < t < 0
 */
struct DivergenceSpec {
  DivergenceId id;
  OpenInterval conj_domain;

  template <std::floating_point S>
  S f(S u) const {
    switch (id) {
      case DivergenceId::KL: return u * std::log(u);
      case DivergenceId::GAN: return u * std::log(u) - (u + 1) * std::log1p(u);
      case DivergenceId::SL: return -std::log1p(u);
    }
    return std::numeric_limits<S>::quiet_NaN();
  }

  template <std::floating_point S>
  S f_prime(S u) const {
    switch (id) {
      case DivergenceId::KL: return std::log(u) + 1;
      case DivergenceId::GAN: return std::log(u) - std::log1p(u);
      case DivergenceId::SL: return -1 / (u + 1);
    }
    return std::numeric_limits<S>::quiet_NaN();
  }

  template <std::floating_point S>
  S f_second(S u) const {
    switch (id) {
      case DivergenceId::KL: return 1 / u;
      case DivergenceId::GAN: return 1 / (u * (u + 1));
      case DivergenceId::SL: return 1 / ((u + 1) * (u + 1));
    }
    return std::numeric_limits<S>::quiet_NaN();
  }

  template <std::floating_point S>
  S conj(S t) const {
    switch (id) {
      case DivergenceId::KL: return std::exp(t - 1);
      case DivergenceId::GAN: return -std::log1p(-std::exp(t));
      case DivergenceId::SL: return -(std::log(-t) + t);
    }
    return std::numeric_limits<S>::quiet_NaN();
  }

  // (f*)' is the inverse of f'.
  template <std::floating_point S>
  S conj_prime(S t) const {
    switch (id) {
      case DivergenceId::KL: return std::exp(t - 1);
      case DivergenceId::GAN: return 1 / std::expm1(-t);
      case DivergenceId::SL: return -1 / t - 1;
    }
    return std::numeric_limits<S>::quiet_NaN();
  }

  template <std::floating_point S>
  S conj_second(S t) const {
    switch (id) {
      case DivergenceId::KL: return std::exp(t - 1);
      case DivergenceId::GAN: {
        const S d = 1 / std::expm1(-t);
        return d * (1 + d);
      }
      case DivergenceId::SL: return 1 / (t * t);
    }
    return std::numeric_limits<S>::quiet_NaN();
  }
};

const DivergenceSpec& divergence(DivergenceId id);
inline const DivergenceSpec& divergence(std::string_view name) {
  return divergence(parse_divergence(name));
}

namespace detail {

[[noreturn]] void throw_domain(const DivergenceSpec& spec, std::string_view what, double arg);

template <std::floating_point S>
S checked_result(const DivergenceSpec& spec, std::string_view what, S arg, S value) {
  if (!std::isfinite(value)) throw_domain(spec, what, static_cast<double>(arg));
  return value;
}

template <std::floating_point S>
void require_positive(const DivergenceSpec& spec, std::string_view what, S u) {
  if (!(u > 0) || !std::isfinite(u)) throw_domain(spec, what, static_cast<double>(u));
}

template <std::floating_point S>
void require_conj_domain(const DivergenceSpec& spec, std::string_view what, S t) {
  if (!spec.conj_domain.contains(t)) throw_domain(spec, what, static_cast<double>(t));
}

}  // namespace detail

template <std::floating_point S>
S eval_generator(const DivergenceSpec& spec, S u) {
  detail::require_positive(spec, "generator", u);
  return detail::checked_result(spec, "generator", u, spec.f(u));
}

template <std::floating_point S>
S generator_prime(const DivergenceSpec& spec, S u) {
  detail::require_positive(spec, "generator derivative", u);
  return detail::checked_result(spec, "generator derivative", u, spec.f_prime(u));
}

template <std::floating_point S>
S generator_second(const DivergenceSpec& spec, S u) {
  detail::require_positive(spec, "generator second derivative", u);
  return detail::checked_result(spec, "generator second derivative", u, spec.f_second(u));
}

template <std::floating_point S>
S fenchel_conjugate(const DivergenceSpec& spec, S t) {
  detail::require_conj_domain(spec, "conjugate", t);
  return detail::checked_result(spec, "conjugate", t, spec.conj(t));
}

template <std::floating_point S>
S conj_prime(const DivergenceSpec& spec, S t) {
  detail::require_conj_domain(spec, "conjugate derivative", t);
  return detail::checked_result(spec, "conjugate derivative", t, spec.conj_prime(t));
}

template <std::floating_point S>
S conj_second(const DivergenceSpec& spec, S t) {
  detail::require_conj_domain(spec, "conjugate second derivative", t);
  return detail::checked_result(spec, "conjugate second derivative", t, spec.conj_second(t));
}

/// Network output at the optimum for posterior value p: T = f'(p).
template <std::floating_point S>
S optimal_T_from_posterior(const DivergenceSpec& spec, S p) {
  return generator_prime(spec, p);
}

/// Posterior estimate carried by an output value: p = (f*)'(t).
template <std::floating_point S>
S posterior_from_T(const DivergenceSpec& spec, S t) {
  return conj_prime(spec, t);
}

// Elementwise versions over dense Eigen objects. Results are evaluated so the
// domain check happens here and not at some later assignment.

template <typename Derived>
typename Derived::PlainObject fenchel_conjugate(const DivergenceSpec& spec,
                                                const Eigen::DenseBase<Derived>& t) {
  using S = typename Derived::Scalar;
  return t.derived().unaryExpr([&spec](S v) { return fenchel_conjugate(spec, v); });
}

template <typename Derived>
typename Derived::PlainObject conj_prime(const DivergenceSpec& spec,
                                         const Eigen::DenseBase<Derived>& t) {
  using S = typename Derived::Scalar;
  return t.derived().unaryExpr([&spec](S v) { return conj_prime(spec, v); });
}

template <typename Derived>
typename Derived::PlainObject conj_second(const DivergenceSpec& spec,
                                          const Eigen::DenseBase<Derived>& t) {
  using S = typename Derived::Scalar;
  return t.derived().unaryExpr([&spec](S v) { return conj_second(spec, v); });
}

template <typename Derived>
typename Derived::PlainObject optimal_T_from_posterior(const DivergenceSpec& spec,
                                                       const Eigen::DenseBase<Derived>& p) {
  using S = typename Derived::Scalar;
  return p.derived().unaryExpr([&spec](S v) { return optimal_T_from_posterior(spec, v); });
}

/// Brute-force conjugate: max over a log-spaced grid u in [1e-6, u_max] of
/// u*t - f(u). The grid and f(u) are tabulated once, so one oracle can be
/// queried at many t.
class ConjugateOracle {
 public:
  static constexpr double kGridLow = 1e-6;
  static constexpr std::size_t kMinGrid = 10'000;

  ConjugateOracle(const DivergenceSpec& spec, double u_max = 1e3, std::size_t n_grid = 1'000'000);

  double operator()(double t) const;

  /// Centered difference of the grid maximum with step h.
  double derivative(double t, double h) const;

  const DivergenceSpec& spec() const { return spec_; }

 private:
  DivergenceSpec spec_;
  Eigen::ArrayXd u_;
  Eigen::ArrayXd fu_;
};

double brute_force_conjugate(const DivergenceSpec& spec, double t, double u_max, std::size_t n_grid);

}  // namespace fpml
