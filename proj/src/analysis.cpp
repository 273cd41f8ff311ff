#include "fpml/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>

#include "json.hpp"

namespace fpml {

namespace {

constexpr double kInvPhi = 0.6180339887498948482;  // (sqrt(5) - 1) / 2

const DivergenceSpec& all_divergences(int i) {
  static const DivergenceId ids[] = {DivergenceId::KL, DivergenceId::GAN, DivergenceId::SL};
  return divergence(ids[i]);
}

// Moves x toward `anchor` until it is strictly inside the conjugate domain.
double pull_inside(const DivergenceSpec& spec, double x, double anchor) {
  for (int i = 0; i < 200 && !spec.conj_domain.contains(x); ++i) x = 0.5 * (x + anchor);
  if (!spec.conj_domain.contains(x)) throw DomainError("cannot place bracket inside the conjugate domain");
  return x;
}

double interior_point(const OpenInterval& dom) {
  if (std::isfinite(dom.lo) && std::isfinite(dom.hi)) return 0.5 * (dom.lo + dom.hi);
  if (std::isfinite(dom.hi)) return dom.hi - 1.0;
  if (std::isfinite(dom.lo)) return dom.lo + 1.0;
  return 0.0;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

TheoremReport make_report(std::string id, long trials, double max_error, double threshold) {
  return {std::move(id), trials, max_error, threshold, max_error <= threshold};
}

}  // namespace

GoldenSectionResult golden_section_maximize(const std::function<double(double)>& g, double lo, double hi,
                                            double tol) {
  if (!(lo < hi)) throw ParameterError("golden-section bracket must satisfy lo < hi");
  if (!(tol > 0.0)) throw ParameterError("golden-section tolerance must be positive");
  double x1 = hi - kInvPhi * (hi - lo);
  double x2 = lo + kInvPhi * (hi - lo);
  double g1 = g(x1);
  double g2 = g(x2);
  int iterations = 0;
  while (hi - lo > tol && iterations < 500) {
    if (g1 < g2) {
      lo = x1;
      x1 = x2;
      g1 = g2;
      x2 = lo + kInvPhi * (hi - lo);
      g2 = g(x2);
    } else {
      hi = x2;
      x2 = x1;
      g2 = g1;
      x1 = hi - kInvPhi * (hi - lo);
      g1 = g(x1);
    }
    ++iterations;
  }
  const double x = 0.5 * (lo + hi);
  return {x, g(x), iterations};
}

double maximize_concave_term(const DivergenceSpec& spec, double c1, double c2, double guess, double tol) {
  if (!(c2 > 0.0)) throw ParameterError("concave term needs c2 > 0");
  if (!(c1 >= 0.0)) throw ParameterError("concave term needs c1 >= 0");
  const OpenInterval& dom = spec.conj_domain;
  guess = pull_inside(spec, guess, interior_point(dom));
  const auto slope = [&](double t) { return c1 - c2 * conj_prime(spec, t); };

  // The slope is decreasing, so grow each side until it has the right sign.
  double lo = pull_inside(spec, guess - 1.0, guess);
  for (int i = 0; slope(lo) < 0.0; ++i) {
    if (i > 200) throw DomainError("could not bracket the maximizer from below");
    const double next = guess - 2.0 * (guess - lo);
    lo = dom.contains(next) ? next : 0.5 * (lo + dom.lo);
  }
  double hi = pull_inside(spec, guess + 1.0, guess);
  for (int i = 0; slope(hi) > 0.0; ++i) {
    if (i > 200) throw DomainError("could not bracket the maximizer from above");
    const double next = guess + 2.0 * (hi - guess);
    hi = dom.contains(next) ? next : 0.5 * (hi + dom.hi);
  }
  if (lo >= hi) return lo;
  const auto term = [&](double t) { return c1 * t - c2 * fenchel_conjugate(spec, t); };
  return golden_section_maximize(term, lo, hi, tol).argmax;
}

OptimalTSolution solve_optimal_T_discrete(const DivergenceSpec& spec, const DiscreteJoint& joint,
                                          const std::optional<TransitionMatrix>& tm) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(joint.k());
  if (tm) {
    if (tm->k() != joint.k()) throw DimensionError("transition matrix size differs from the joint");
    auto rates = tm->offdiag_rates();
    if (!rates) throw ParameterError("optimal T needs a uniform off-diagonal transition matrix");
    e = *rates;
  }
  const DiscreteJoint observed = tm ? joint.noisy(*tm) : joint;

  const Eigen::MatrixXd clean_post = joint.posterior();
  Eigen::MatrixXd target = clean_post * (1.0 - e.sum());
  target.rowwise() += e.transpose();
  OptimalTSolution out{optimal_T_from_posterior(spec, target), Eigen::MatrixXd(joint.m(), joint.k()), 0.0};

  const Eigen::VectorXd p_x = observed.p_x();
  for (int m = 0; m < joint.m(); ++m) {
    for (int j = 0; j < joint.k(); ++j) {
      const double t = maximize_concave_term(spec, observed.pmf()(m, j), p_x(m), out.closed_form(m, j));
      out.numeric(m, j) = t;
      const double gap = std::abs(conj_prime(spec, t) - conj_prime(spec, out.closed_form(m, j)));
      out.max_posterior_gap = std::max(out.max_posterior_gap, gap);
    }
  }
  return out;
}

double taylor_bias_bound(const DivergenceSpec& spec, const Eigen::VectorXd& t_star, const Eigen::VectorXd& t_i) {
  if (t_star.size() != t_i.size()) throw DimensionError("T vectors differ in length");
  conj_prime(spec, t_star);  // domain check
  return (t_star - t_i).norm() * conj_second(spec, t_i).norm();
}

double posterior_shift(const DivergenceSpec& spec, const Eigen::VectorXd& t_star, const Eigen::VectorXd& t_i) {
  if (t_star.size() != t_i.size()) throw DimensionError("T vectors differ in length");
  return std::abs((conj_prime(spec, t_star) - conj_prime(spec, t_i)).sum());
}

Eigen::VectorXd training_bias_expression(const DivergenceSpec& spec, const Eigen::VectorXd& p_star,
                                         const Eigen::VectorXd& e, const Eigen::VectorXd& delta,
                                         const Eigen::VectorXd& t_star_noisy) {
  check_offdiag_rates(e);
  const auto k = p_star.size();
  if (e.size() != k || delta.size() != k || t_star_noisy.size() != k) {
    throw DimensionError("bias expression inputs differ in length");
  }
  const Eigen::VectorXd curvature = conj_second(spec, t_star_noisy - delta);
  return (e.sum() * p_star - e).array() + delta.array() * curvature.array();
}

Eigen::VectorXd direct_training_bias(const DivergenceSpec& spec, const Eigen::VectorXd& p_star,
                                     const Eigen::VectorXd& delta, const Eigen::VectorXd& t_star_noisy) {
  if (delta.size() != p_star.size() || t_star_noisy.size() != p_star.size()) {
    throw DimensionError("bias inputs differ in length");
  }
  return p_star - conj_prime(spec, t_star_noisy - delta);
}

ConvergenceRecord convergence_record(const DivergenceSpec& spec, int iteration, const Eigen::MatrixXd& t_table,
                                     const Eigen::MatrixXd& t_star_table) {
  if (t_table.rows() != t_star_table.rows() || t_table.cols() != t_star_table.cols()) {
    throw DimensionError("T tables differ in shape");
  }
  ConvergenceRecord rec{iteration,
                        t_table,
                        conj_prime(spec, t_table),
                        t_star_table - t_table,
                        Eigen::VectorXd(t_table.rows()),
                        Eigen::VectorXd(t_table.rows())};
  for (Eigen::Index n = 0; n < t_table.rows(); ++n) {
    const Eigen::VectorXd star = t_star_table.row(n).transpose();
    const Eigen::VectorXd cur = t_table.row(n).transpose();
    rec.bound(n) = taylor_bias_bound(spec, star, cur);
    rec.empirical_bias(n) = posterior_shift(spec, star, cur);
  }
  return rec;
}

std::vector<ConvergenceRecord> convergence_records(const TrainTrace& trace, const Eigen::MatrixXd& x,
                                                   const Eigen::MatrixXd& t_star_table) {
  std::vector<ConvergenceRecord> out;
  for (const auto& [epoch, model] : trace.snapshots) {
    const DivergenceSpec& spec = divergence(model.spec.divergence);
    Eigen::MatrixXd head = forward(model, x);
    if (model.spec.head == Head::SimplexD) head = optimal_T_from_posterior(spec, head);
    out.push_back(convergence_record(spec, epoch, head, t_star_table));
  }
  return out;
}

Eigen::VectorXd random_simplex(int k, std::mt19937_64& rng) {
  if (k < 1) throw ParameterError("simplex dimension must be positive");
  std::exponential_distribution<double> expo(1.0);
  Eigen::VectorXd v(k);
  for (int i = 0; i < k; ++i) v(i) = expo(rng);
  return v / v.sum();
}

Eigen::VectorXd random_simplex_unique_argmax(int k, std::mt19937_64& rng, double margin) {
  for (;;) {
    Eigen::VectorXd p = random_simplex(k, rng);
    if (k == 1) return p;
    Eigen::VectorXd sorted = p;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    if (sorted(0) - sorted(1) >= margin) return p;
  }
}

DiscreteJoint random_discrete_joint(int m, int k, std::mt19937_64& rng) {
  if (m < 1 || k < 2) throw ParameterError("random joint needs M >= 1 and K >= 2");
  Eigen::MatrixXd pmf(m, k);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < k; ++j) pmf(i, j) = uniform(rng, 0.01, 1.0);
  }
  return DiscreteJoint(pmf / pmf.sum());
}

Eigen::VectorXd random_offdiag_rates(int k, std::mt19937_64& rng, double max_total) {
  if (!(max_total > 0.0 && max_total <= 1.0)) throw ParameterError("max_total must lie in (0, 1]");
  return random_simplex(k, rng) * uniform(rng, 0.0, max_total);
}

Eigen::MatrixXd random_t_table(const DivergenceSpec& spec, int rows, int k, std::mt19937_64& rng) {
  Eigen::MatrixXd u(rows, k);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < k; ++j) u(i, j) = uniform(rng, 0.01, 2.0);
  }
  return optimal_T_from_posterior(spec, u);
}

TheoremReport check_noisy_identity(int k, long trials_per_divergence, std::uint64_t seed, const BiasFunction& bias) {
  constexpr int kSupport = 8;
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int d = 0; d < 3; ++d) {
    const DivergenceSpec& spec = all_divergences(d);
    for (long trial = 0; trial < trials_per_divergence; ++trial) {
      const DiscreteJoint joint = random_discrete_joint(kSupport, k, rng);
      const Eigen::MatrixXd t = random_t_table(spec, kSupport, k, rng);
      const Eigen::VectorXd e = random_offdiag_rates(k, rng, 0.99);
      const double lhs = exact_jf_noisy(spec, joint, uniform_offdiag_matrix(e), t);
      const double b = bias ? bias(spec, joint, t, e) : exact_bias(spec, joint, t, e);
      const double rhs = (1.0 - e.sum()) * exact_jf(spec, joint, t) + b;
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  }
  return make_report(k == 2 ? "binary_noisy_identity" : "multiclass_noisy_identity", 3 * trials_per_divergence,
                     worst, 1e-12);
}

TheoremReport check_closed_form_optimum(int k, long trials_per_divergence, std::uint64_t seed) {
  constexpr int kSupport = 4;
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int d = 0; d < 3; ++d) {
    const DivergenceSpec& spec = all_divergences(d);
    for (long trial = 0; trial < trials_per_divergence; ++trial) {
      const DiscreteJoint joint = random_discrete_joint(kSupport, k, rng);
      const TransitionMatrix tm = uniform_offdiag_matrix(random_offdiag_rates(k, rng, 0.9));
      worst = std::max(worst, solve_optimal_T_discrete(spec, joint, tm).max_posterior_gap);
    }
  }
  return make_report(k == 2 ? "binary_closed_form_optimum" : "multiclass_closed_form_optimum", 3 * trials_per_divergence, worst,
                     1e-6);
}

TheoremReport check_argmax_invariance(long samples_per_setting, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  long trials = 0;
  long failures = 0;
  for (int k = 2; k <= 10; ++k) {
    const double limit = static_cast<double>(k - 1) / k;
    for (double eta : {0.1, 0.3, 0.5 * limit, 0.99 * limit}) {
      const Eigen::VectorXd e = Eigen::VectorXd::Constant(k, eta / (k - 1));
      for (long s = 0; s < samples_per_setting; ++s) {
        const Eigen::VectorXd p = random_simplex_unique_argmax(k, rng);
        Eigen::Index clean_arg = 0;
        Eigen::Index noisy_arg = 0;
        p.maxCoeff(&clean_arg);
        noisy_posterior_forward(p, e).maxCoeff(&noisy_arg);
        failures += clean_arg != noisy_arg;
        ++trials;
      }
    }
  }
  return make_report("argmax_invariance", trials, static_cast<double>(failures) / trials, 0.0);
}

TheoremReport check_posterior_correction(long trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  long failures = 0;
  for (long s = 0; s < trials; ++s) {
    const int k = std::uniform_int_distribution<int>(2, 10)(rng);
    const Eigen::VectorXd p = random_simplex_unique_argmax(k, rng);
    const Eigen::VectorXd e = random_offdiag_rates(k, rng, 0.99);
    const Eigen::MatrixXd noisy = noisy_posterior_forward(p, e).transpose();
    const Eigen::VectorXi corrected = predict(posterior_correct(noisy, e));
    failures += corrected(0) != predict(p.transpose())(0);
  }
  return make_report("posterior_correction", trials, static_cast<double>(failures) / trials, 0.0);
}

TheoremReport check_bias_bound(long trials_per_divergence, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int d = 0; d < 3; ++d) {
    const DivergenceSpec& spec = all_divergences(d);
    long failures = 0;
    for (long trial = 0; trial < trials_per_divergence; ++trial) {
      const int k = std::uniform_int_distribution<int>(2, 10)(rng);
      const Eigen::VectorXd p = random_simplex(k, rng);
      const Eigen::VectorXd e = random_offdiag_rates(k, rng, 0.9);
      const Eigen::VectorXd t_star = optimal_T_from_posterior(spec, noisy_posterior_forward(p, e));
      Eigen::VectorXd t_i(k);
      do {
        for (int j = 0; j < k; ++j) t_i(j) = t_star(j) - uniform(rng, -1e-2, 1e-2);
      } while (!std::all_of(t_i.begin(), t_i.end(), [&](double t) { return spec.conj_domain.contains(t); }));
      failures += taylor_bias_bound(spec, t_star, t_i) < posterior_shift(spec, t_star, t_i);
    }
    worst = std::max(worst, static_cast<double>(failures) / trials_per_divergence);
  }
  return make_report("bias_bound", 3 * trials_per_divergence, worst, 0.01);
}

TheoremReport check_bias_order(long trials_per_divergence, std::uint64_t seed) {
  constexpr double kDeltaScale = 1e-3;
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int d = 0; d < 3; ++d) {
    const DivergenceSpec& spec = all_divergences(d);
    double residual_full = 0.0;
    double residual_half = 0.0;
    for (long trial = 0; trial < trials_per_divergence; ++trial) {
      const int k = std::uniform_int_distribution<int>(2, 10)(rng);
      const Eigen::VectorXd p = random_simplex(k, rng);
      const Eigen::VectorXd e = random_offdiag_rates(k, rng, 0.9);
      const Eigen::VectorXd t_star = optimal_T_from_posterior(spec, noisy_posterior_forward(p, e));
      Eigen::VectorXd delta(k);
      for (int j = 0; j < k; ++j) {
        do {
          delta(j) = uniform(rng, -kDeltaScale, kDeltaScale);
        } while (!spec.conj_domain.contains(t_star(j) - delta(j)));
      }
      for (const double scale : {1.0, 0.5}) {
        const Eigen::VectorXd dl = scale * delta;
        const double r = (training_bias_expression(spec, p, e, dl, t_star) - direct_training_bias(spec, p, dl, t_star))
                             .cwiseAbs()
                             .maxCoeff();
        (scale == 1.0 ? residual_full : residual_half) += r;
      }
    }
    worst = std::max(worst, residual_half / residual_full);
  }
  return make_report("bias_order", 3 * trials_per_divergence, worst, 1.0 / 3.0);
}

std::vector<TheoremReport> verify_theorems(const VerifyOptions& options) {
  const std::uint64_t s = options.seed;
  return {
      check_noisy_identity(2, 100, s + 1, options.bias),
      check_noisy_identity(5, 100, s + 2, options.bias),
      check_closed_form_optimum(2, 100, s + 3),
      check_closed_form_optimum(5, 100, s + 4),
      check_argmax_invariance(10000, s + 5),
      check_posterior_correction(10000, s + 6),
      check_bias_bound(10000, s + 7),
      check_bias_order(1000, s + 8),
  };
}

std::vector<TheoremReport> verify_theorems(std::uint64_t seed, const std::filesystem::path& report_path) {
  auto reports = verify_theorems(VerifyOptions{seed, {}});
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    if (!out) throw ConfigError("cannot write " + report_path.string());
    write_reports_json(reports, out);
  }
  return reports;
}

void write_reports_json(const std::vector<TheoremReport>& reports, std::ostream& out) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& r : reports) {
    doc.push_back({{"theorem_id", r.theorem_id},
                   {"trials", r.trials},
                   {"max_error", r.max_error},
                   {"threshold", r.threshold},
                   {"pass", r.pass}});
  }
  out << doc.dump(2) << '\n';
}

}  // namespace fpml
