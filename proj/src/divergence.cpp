#include "fpml/divergence.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <string>

namespace fpml {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

const DivergenceSpec kKl{DivergenceId::KL, {-kInf, kInf}};
const DivergenceSpec kGan{DivergenceId::GAN, {-kInf, 0.0}};
const DivergenceSpec kSl{DivergenceId::SL, {-1.0, 0.0}};

}  // namespace

DivergenceId parse_divergence(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "kl") return DivergenceId::KL;
  if (lower == "gan") return DivergenceId::GAN;
  if (lower == "sl") return DivergenceId::SL;
  throw ParameterError("unknown divergence '" + std::string(name) + "' (expected kl, gan or sl)");
}

std::string_view to_string(DivergenceId id) {
  switch (id) {
    case DivergenceId::KL: return "kl";
    case DivergenceId::GAN: return "gan";
    case DivergenceId::SL: return "sl";
  }
  return "?";
}

const DivergenceSpec& divergence(DivergenceId id) {
  switch (id) {
    case DivergenceId::KL: return kKl;
    case DivergenceId::GAN: return kGan;
    case DivergenceId::SL: return kSl;
  }
  throw ParameterError("invalid divergence id");
}

namespace detail {

void throw_domain(const DivergenceSpec& spec, std::string_view what, double arg) {
  std::ostringstream msg;
  msg.precision(17);
  msg << to_string(spec.id) << ' ' << what << ": argument " << arg << " outside the domain";
  throw DomainError(msg.str());
}

}  // namespace detail

ConjugateOracle::ConjugateOracle(const DivergenceSpec& spec, double u_max, std::size_t n_grid)
    : spec_(spec) {
  if (n_grid < kMinGrid) throw ParameterError("conjugate oracle needs at least 1e4 grid points");
  if (!(u_max > kGridLow)) throw ParameterError("conjugate oracle u_max must exceed 1e-6");
  const double log_lo = std::log(kGridLow);
  const double step = (std::log(u_max) - log_lo) / static_cast<double>(n_grid - 1);
  u_ = Eigen::ArrayXd::NullaryExpr(static_cast<Eigen::Index>(n_grid),
                                   [&](Eigen::Index k) { return std::exp(log_lo + step * k); });
  fu_ = u_.unaryExpr([this](double u) { return spec_.f(u); });
}

double ConjugateOracle::operator()(double t) const {
  detail::require_conj_domain(spec_, "brute-force conjugate", t);
  return (u_ * t - fu_).maxCoeff();
}

double ConjugateOracle::derivative(double t, double h) const {
  return ((*this)(t + h) - (*this)(t - h)) / (2 * h);
}

double brute_force_conjugate(const DivergenceSpec& spec, double t, double u_max, std::size_t n_grid) {
  return ConjugateOracle(spec, u_max, n_grid)(t);
}

}  // namespace fpml
