#include <cmath>
#include <random>

#include "doctest.h"
#include "fpml/analysis.hpp"
#include "fpml/objective.hpp"
#include "fpml/posterior.hpp"

using namespace fpml;

namespace {

const DivergenceSpec* all_specs[] = {&divergence(DivergenceId::KL), &divergence(DivergenceId::GAN),
                                     &divergence(DivergenceId::SL)};

// Relative-or-absolute comparison for finite-difference checks.
bool fd_close(double analytic, double numeric, double tol) {
  return std::abs(analytic - numeric) <= tol * std::max(1.0, std::abs(numeric));
}

template <typename F>
Eigen::VectorXd central_difference(F&& value, Eigen::VectorXd x) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(x(i)));
    const double keep = x(i);
    x(i) = keep + h;
    const double up = value(x);
    x(i) = keep - h;
    const double down = value(x);
    x(i) = keep;
    g(i) = (up - down) / (2 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("per-sample objective arithmetic") {
  const auto& kl = divergence(DivergenceId::KL);
  const Eigen::Vector2d t(1.0, 1.0);
  CHECK(jf_sample(kl, t, 0) == doctest::Approx(-1.0));
  const Eigen::VectorXd g = jf_grad_sample(kl, t, 0);
  CHECK(g(0) == doctest::Approx(0.0));
  CHECK(g(1) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(jf_sample(kl, t, 2), ParameterError);
  CHECK_THROWS_AS(jf_sample(divergence(DivergenceId::GAN), t, 0), DomainError);
}

TEST_CASE("objective at a smoothed one-hot posterior") {
  const auto& kl = divergence(DivergenceId::KL);
  const double eps = 0.2;
  const int k = 4;
  Eigen::VectorXd p = Eigen::VectorXd::Constant(k, eps / (k - 1));
  p(1) = 1 - eps;
  const Eigen::VectorXd t = optimal_T_from_posterior(kl, p);
  // log(p_y) + 1 - sum_i p_i, evaluated by hand.
  const double expected = std::log(1 - eps) + 1 - 1.0;
  CHECK(jf_sample(kl, t, 1) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("gradient vanishes at the one-hot optimum") {
  for (const auto* spec : all_specs) {
    Eigen::VectorXd p = Eigen::VectorXd::Constant(3, 1e-300);
    p(2) = 1.0;
    Eigen::VectorXd t(3);
    for (int i = 0; i < 3; ++i) t(i) = optimal_T_from_posterior(*spec, std::max(p(i), 1e-12));
    const Eigen::VectorXd g = jf_grad_sample(*spec, t, 2);
    CHECK(g.cwiseAbs().maxCoeff() <= 1e-11);
  }
}

TEST_CASE("batch mean is permutation invariant") {
  std::mt19937_64 rng(4);
  const auto& gan = divergence(DivergenceId::GAN);
  const Eigen::MatrixXd t = random_t_table(gan, 6, 3, rng);
  Eigen::VectorXi labels(6);
  labels << 0, 1, 2, 2, 1, 0;
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
  perm.indices() << 3, 1, 5, 0, 2, 4;
  const Eigen::MatrixXd tp = perm * t;
  const Eigen::VectorXi lp = perm * labels;
  CHECK(jf_batch(gan, tp, lp) == doctest::Approx(jf_batch(gan, t, labels)).epsilon(1e-14));
  CHECK_THROWS_AS(jf_batch(gan, t, Eigen::VectorXi::Zero(5)), DimensionError);
}

TEST_CASE("bias terms") {
  const auto& kl = divergence(DivergenceId::KL);
  const Eigen::RowVector2d t(1.0, 1.0);
  CHECK(bias_binary(kl, t, 0.1, 0.3) == doctest::Approx(-0.4));
  CHECK(bias_binary(kl, t, 0.0, 0.0) == 0.0);
  CHECK_THROWS_AS(bias_binary(kl, t, 0.6, 0.4), ParameterError);

  std::mt19937_64 rng(8);
  for (const auto* spec : all_specs) {
    const Eigen::MatrixXd t2 = random_t_table(*spec, 5, 2, rng);
    CHECK(bias_multiclass(*spec, t2, Eigen::Vector2d(0.15, 0.25)) ==
          doctest::Approx(bias_binary(*spec, t2, 0.15, 0.25)).epsilon(1e-15));
    CHECK(bias_multiclass(*spec, t2, Eigen::Vector2d::Zero()) == 0.0);
  }
}

TEST_CASE("corrected objective with zero rates equals the plain objective bit for bit") {
  std::mt19937_64 rng(15);
  for (const auto* spec : all_specs) {
    const Eigen::MatrixXd t = random_t_table(*spec, 4, 3, rng);
    const Eigen::VectorXi labels = Eigen::Vector4i(0, 2, 1, 1);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
    CHECK(corrected_jf_batch(*spec, t, labels, zero) == jf_batch(*spec, t, labels));
    const Eigen::VectorXd row = t.row(0).transpose();
    CHECK(corrected_grad_sample(*spec, row, 1, zero) == jf_grad_sample(*spec, row, 1));
  }
}

TEST_CASE("raw-T gradients match finite differences") {
  std::mt19937_64 rng(21);
  for (const auto* spec : all_specs) {
    for (int trial = 0; trial < 200; ++trial) {
      const int k = 2 + trial % 5;
      const Eigen::VectorXd t = random_t_table(*spec, 1, k, rng).row(0).transpose();
      const int label = trial % k;
      const Eigen::VectorXd e = random_offdiag_rates(k, rng, 0.9);
      const Eigen::VectorXd fd_plain =
          central_difference([&](const Eigen::VectorXd& x) { return jf_sample(*spec, x, label); }, t);
      const Eigen::VectorXd fd_corr = central_difference(
          [&](const Eigen::VectorXd& x) { return corrected_jf_sample(*spec, x, label, e); }, t);
      const Eigen::VectorXd g_plain = jf_grad_sample(*spec, t, label);
      const Eigen::VectorXd g_corr = corrected_grad_sample(*spec, t, label, e);
      for (int i = 0; i < k; ++i) {
        CHECK(fd_close(g_plain(i), fd_plain(i), 1e-6));
        CHECK(fd_close(g_corr(i), fd_corr(i), 1e-6));
      }
    }
  }
}

TEST_CASE("active and passive parts") {
  std::mt19937_64 rng(5);
  for (const auto* spec : all_specs) {
    Eigen::VectorXd t = random_t_table(*spec, 1, 4, rng).row(0).transpose();
    const auto ap = active_passive_split(*spec, t, 2);
    CHECK(std::abs(ap.active + ap.passive - jf_sample(*spec, t, 2)) <= 1e-12);
    Eigen::VectorXd moved = t;
    moved(0) = optimal_T_from_posterior(*spec, 0.37);
    CHECK(active_passive_split(*spec, moved, 2).active == ap.active);
    moved = t;
    moved(2) = optimal_T_from_posterior(*spec, 0.91);
    CHECK(active_passive_split(*spec, moved, 2).passive == ap.passive);
  }
}

TEST_CASE("simplex objectives") {
  const auto& kl = divergence(DivergenceId::KL);
  const auto& gan = divergence(DivergenceId::GAN);
  const auto& sl = divergence(DivergenceId::SL);

  Eigen::VectorXd onehot = Eigen::VectorXd::Zero(3);
  onehot(1) = 1.0;
  CHECK(jf_simplex_kl(onehot, 1) == doctest::Approx(-1.0));
  const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(10, 0.1);
  CHECK(jf_simplex_kl(uniform, 4) == doctest::Approx(std::log(0.1) - 1.0).epsilon(1e-15));
  CHECK_THROWS_AS(jf_simplex_kl(Eigen::Vector2d(0.5, 0.6), 0), DomainError);
  CHECK_THROWS_AS(jf_simplex_gan(Eigen::Vector2d(0.0, 1.0), 0), DomainError);

  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd d = random_simplex(5, rng);
    const int y = trial % 5;
    // Substituting T = f'(D) into the raw objective.
    CHECK(std::abs(jf_simplex_gan(d, y) - jf_sample(gan, optimal_T_from_posterior(gan, d), y)) <= 1e-12);
    CHECK(std::abs(jf_simplex_sl(d, y) - jf_sample(sl, optimal_T_from_posterior(sl, d), y)) <= 1e-12);
    // The KL form drops the constant sum_i D_i = 1 and keeps -1.
    CHECK(std::abs(jf_simplex_kl(d, y) - (jf_sample(kl, optimal_T_from_posterior(kl, d), y) - 1.0)) <= 1e-12);
  }
}

TEST_CASE("simplex gradients match finite differences") {
  std::mt19937_64 rng(34);
  for (const auto* spec : all_specs) {
    for (int trial = 0; trial < 100; ++trial) {
      const int k = 2 + trial % 4;
      const Eigen::VectorXd d = random_simplex(k, rng).array() + 0.01;  // off the simplex is fine here
      const Eigen::VectorXd dn = d / d.sum();
      const int y = trial % k;
      const Eigen::VectorXd e = random_offdiag_rates(k, rng, 0.8);
      if (spec->id != DivergenceId::KL) {
        const Eigen::VectorXd fd =
            central_difference([&](const Eigen::VectorXd& x) { return jf_simplex(*spec, x, y); }, d);
        const Eigen::VectorXd g = jf_simplex_grad(*spec, d, y);
        for (int i = 0; i < k; ++i) CHECK(fd_close(g(i), fd(i), 1e-6));
      }
      const Eigen::VectorXd fdc = central_difference(
          [&](const Eigen::VectorXd& x) {
            return spec->id == DivergenceId::KL
                       ? std::log(x(y)) - 1.0 - bias_sample(*spec, optimal_T_from_posterior(*spec, x), e)
                       : corrected_simplex_sample(*spec, x, y, e);
          },
          dn);
      const Eigen::VectorXd gc = corrected_simplex_grad(*spec, dn, y, e);
      for (int i = 0; i < k; ++i) CHECK(fd_close(gc(i), fdc(i), 1e-6));
    }
  }
}

TEST_CASE("head objective dispatch") {
  const auto& sl = divergence(DivergenceId::SL);
  const Eigen::Vector3d d(0.2, 0.5, 0.3);
  const Eigen::Vector3d e(0.05, 0.1, 0.0);
  const auto simplex = head_objective(sl, Head::SimplexD, d, 1, e);
  CHECK(simplex.value == doctest::Approx(corrected_simplex_sample(sl, d, 1, e)));
  const Eigen::Vector3d t(-0.4, -0.6, -0.2);
  const auto raw = head_objective(sl, Head::RawT, t, 0, e);
  CHECK(raw.value == doctest::Approx(corrected_jf_sample(sl, t, 0, e)));
  CHECK(raw.gradient.isApprox(corrected_grad_sample(sl, t, 0, e)));
  CHECK(parse_head("simplex") == Head::SimplexD);
  CHECK(parse_head("raw") == Head::RawT);
  CHECK_THROWS_AS(parse_head("logits"), ParameterError);
}

TEST_CASE("objective config rates") {
  ObjectiveConfig cfg;
  CHECK(training_rates(cfg, 3).isZero());
  cfg.correction = ObjectiveCorrection{NoiseParams{SymmetricNoise{0.2}, 0}};
  CHECK(training_rates(cfg, 3).isApprox(Eigen::VectorXd::Constant(3, 0.1)));
  CHECK(posterior_rates(cfg, 3).isZero());
  cfg.correction = PosteriorCorrection{NoiseParams{UniformOffDiagonalNoise{Eigen::Vector2d(0.1, 0.3)}, 0}};
  CHECK(posterior_rates(cfg, 2).isApprox(Eigen::Vector2d(0.1, 0.3)));
  CHECK(training_rates(cfg, 2).isZero());
  cfg.correction = ObjectiveCorrection{NoiseParams{CustomNoise{symmetric_matrix(2, 0.1)}, 0}};
  CHECK_THROWS_AS(validate(cfg, 2), ParameterError);
}

TEST_CASE("discrete joint") {
  Eigen::MatrixXd pmf(2, 2);
  pmf << 0.1, 0.3, 0.4, 0.2;
  const DiscreteJoint joint(pmf);
  CHECK(joint.p_x().isApprox(Eigen::Vector2d(0.4, 0.6)));
  CHECK(joint.p_y().isApprox(Eigen::Vector2d(0.5, 0.5)));
  CHECK(joint.posterior()(0, 1) == doctest::Approx(0.75));
  const auto noisy = joint.noisy(uniform_offdiag_matrix(Eigen::Vector2d(0.1, 0.3)));
  // p(x0, noisy 0) = 0.1 * 0.7 + 0.3 * 0.1
  CHECK(noisy.pmf()(0, 0) == doctest::Approx(0.1));
  CHECK(noisy.p_x().isApprox(joint.p_x()));

  Eigen::MatrixXd unnormalized = pmf;
  unnormalized(0, 0) = 0.2;
  CHECK_THROWS_AS(DiscreteJoint{unnormalized}, ParameterError);
  Eigen::MatrixXd empty_row(2, 2);
  empty_row << 0.0, 0.0, 0.5, 0.5;
  CHECK_THROWS_AS(DiscreteJoint{empty_row}, ParameterError);
}

TEST_CASE("exact noisy objective identities") {
  std::mt19937_64 rng(77);
  for (const auto* spec : all_specs) {
    const DiscreteJoint joint = random_discrete_joint(8, 5, rng);
    const Eigen::MatrixXd t = random_t_table(*spec, 8, 5, rng);
    CHECK(exact_jf_noisy(*spec, joint, symmetric_matrix(5, 0.0), t) ==
          doctest::Approx(exact_jf(*spec, joint, t)).epsilon(1e-15));
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::VectorXd e = random_offdiag_rates(5, rng, 0.99);
      const double lhs = exact_jf_noisy(*spec, joint, uniform_offdiag_matrix(e), t);
      const double rhs = (1 - e.sum()) * exact_jf(*spec, joint, t) + exact_bias(*spec, joint, t, e);
      CHECK(std::abs(lhs - rhs) <= 1e-12);
    }
  }
}

TEST_CASE("corrected noisy optimum equals the clean optimum per point") {
  // Maximize the exact corrected noisy objective one (x, j) term at a time.
  std::mt19937_64 rng(91);
  for (const auto* spec : all_specs) {
    const DiscreteJoint joint = random_discrete_joint(3, 3, rng);
    const Eigen::VectorXd e = random_offdiag_rates(3, rng, 0.6);
    const DiscreteJoint noisy = joint.noisy(uniform_offdiag_matrix(e));
    const Eigen::MatrixXd clean_t = optimal_T_from_posterior(*spec, joint.posterior());
    for (int m = 0; m < 3; ++m) {
      for (int j = 0; j < 3; ++j) {
        // Corrected term: (p~(x,j) - e_j p(x)) T - (1 - sum e) p(x) f*(T).
        const double c1 = noisy.pmf()(m, j) - e(j) * joint.p_x()(m);
        const double c2 = (1 - e.sum()) * joint.p_x()(m);
        const double t = maximize_concave_term(*spec, c1, c2, clean_t(m, j));
        CHECK(std::abs(conj_prime(*spec, t) - joint.posterior()(m, j)) <= 1e-6);
      }
    }
  }
}
