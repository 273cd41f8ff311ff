#include <cmath>
#include <random>

#include "doctest.h"
#include "fpml/divergence.hpp"

using namespace fpml;

namespace {

const DivergenceSpec& kl() { return divergence(DivergenceId::KL); }
const DivergenceSpec& gan() { return divergence(DivergenceId::GAN); }
const DivergenceSpec& sl() { return divergence(DivergenceId::SL); }

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace

TEST_CASE("divergence ids parse and print") {
  CHECK(parse_divergence("kl") == DivergenceId::KL);
  CHECK(parse_divergence("GAN") == DivergenceId::GAN);
  CHECK(parse_divergence("Sl") == DivergenceId::SL);
  CHECK_THROWS_AS(parse_divergence("tv"), ParameterError);
  CHECK(to_string(DivergenceId::GAN) == "gan");
  CHECK(&divergence("sl") == &sl());
}

TEST_CASE("generator values") {
  CHECK(eval_generator(kl(), 1.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(eval_generator(kl(), std::exp(1.0)) == doctest::Approx(std::exp(1.0)).epsilon(1e-14));
  CHECK(eval_generator(sl(), 0.5) == doctest::Approx(-0.405465108108164381978).epsilon(1e-14));
  CHECK_THROWS_AS(eval_generator(kl(), 0.0), DomainError);
  CHECK_THROWS_AS(eval_generator(gan(), -1.0), DomainError);

  // Reference values from a 40-digit evaluation of the closed forms.
  struct Row {
    const DivergenceSpec* spec;
    double u, f, fp, fpp;
  };
  const Row rows[] = {
      {&kl(), 0.25, -0.34657359027997265471, -0.38629436111989061883, 4.0},
      {&kl(), 2.0, 1.3862943611198906188, 1.6931471805599453094, 0.5},
      {&gan(), 0.25, -0.62550302942273484942, -1.6094379124341003746, 3.2},
      {&gan(), 2.0, -1.9095425048844384554, -0.40546510810816438198, 1.0 / 6.0},
      {&sl(), 0.25, -0.22314355131420975577, -0.8, 0.64},
      {&sl(), 2.0, -1.0986122886681096914, -1.0 / 3.0, 1.0 / 9.0},
  };
  for (const auto& r : rows) {
    CAPTURE(to_string(r.spec->id));
    CAPTURE(r.u);
    CHECK(close(eval_generator(*r.spec, r.u), r.f, 1e-14));
    CHECK(close(generator_prime(*r.spec, r.u), r.fp, 1e-14));
    CHECK(close(generator_second(*r.spec, r.u), r.fpp, 1e-14));
  }
}

TEST_CASE("generator at 1 and midpoint convexity") {
  // Only the KL generator vanishes at 1; the GAN and SL closed forms carry constants.
  CHECK(std::abs(eval_generator(kl(), 1.0)) <= 1e-12);
  CHECK(eval_generator(gan(), 1.0) == doctest::Approx(-2.0 * std::log(2.0)).epsilon(1e-15));
  CHECK(eval_generator(sl(), 1.0) == doctest::Approx(-std::log(2.0)).epsilon(1e-15));

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> log_u(std::log(1e-3), std::log(1e3));
  for (const auto* spec : {&kl(), &gan(), &sl()}) {
    for (int i = 0; i < 1000; ++i) {
      const double u1 = std::exp(log_u(rng));
      const double u2 = std::exp(log_u(rng));
      CHECK(eval_generator(*spec, 0.5 * (u1 + u2)) <=
            0.5 * eval_generator(*spec, u1) + 0.5 * eval_generator(*spec, u2) + 1e-9);
    }
  }
}

TEST_CASE("conjugate values") {
  CHECK(fenchel_conjugate(kl(), 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(fenchel_conjugate(kl(), 0.0) == doctest::Approx(0.36787944117144233).epsilon(1e-15));
  CHECK(fenchel_conjugate(gan(), std::log(0.5)) == doctest::Approx(0.69314718055994531).epsilon(1e-14));

  struct Row {
    const DivergenceSpec* spec;
    double t, c, cp, cpp;
  };
  const Row rows[] = {
      {&kl(), -1.0, 0.13533528323661269189, 0.13533528323661269189, 0.13533528323661269189},
      {&kl(), 0.5, 0.6065306597126334236, 0.6065306597126334236, 0.6065306597126334236},
      {&gan(), -2.0, 0.14541345786885905697, 0.15651764274966565182, 0.1810154152415776166},
      {&gan(), -0.3, 1.3502256128148466795, 2.8582959135100826023, 11.028151442698520206},
      {&sl(), -0.8, 1.0231435513142097558, 0.25, 1.5625},
      {&sl(), -0.3, 1.5039728043259359926, 7.0 / 3.0, 100.0 / 9.0},
  };
  for (const auto& r : rows) {
    CAPTURE(to_string(r.spec->id));
    CAPTURE(r.t);
    CHECK(close(fenchel_conjugate(*r.spec, r.t), r.c, 1e-14));
    CHECK(close(conj_prime(*r.spec, r.t), r.cp, 1e-14));
    CHECK(close(conj_second(*r.spec, r.t), r.cpp, 1e-13));
  }
}

TEST_CASE("conjugate derivative examples") {
  CHECK(conj_prime(kl(), 1.0) == doctest::Approx(1.0));
  CHECK(conj_prime(sl(), -0.5) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(conj_prime(gan(), std::log(1.0 / 3.0)) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(conj_second(kl(), 1.0) == doctest::Approx(1.0));
  CHECK(conj_second(sl(), -0.5) == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(conj_second(gan(), std::log(1.0 / 3.0)) == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("conjugate domains are enforced") {
  CHECK_THROWS_AS(fenchel_conjugate(gan(), 0.0), DomainError);
  CHECK_THROWS_AS(conj_prime(gan(), 0.1), DomainError);
  CHECK_THROWS_AS(conj_prime(sl(), -1.0), DomainError);
  CHECK_THROWS_AS(conj_second(sl(), 0.0), DomainError);
  CHECK_THROWS_AS(fenchel_conjugate(kl(), std::nan("")), DomainError);
  CHECK_THROWS_AS(conj_prime(kl(), INFINITY), DomainError);
  CHECK_NOTHROW(fenchel_conjugate(kl(), -50.0));
  // Overflow is an error, not an infinity.
  CHECK_THROWS_AS(fenchel_conjugate(kl(), 1e4), DomainError);
}

TEST_CASE("optimal T and posterior round trip") {
  CHECK(optimal_T_from_posterior(kl(), 1.0) == doctest::Approx(1.0));
  CHECK(optimal_T_from_posterior(sl(), 1.0) == doctest::Approx(-0.5));
  CHECK(optimal_T_from_posterior(gan(), 0.5) == doctest::Approx(-1.0986122886681098).epsilon(1e-14));
  CHECK_THROWS_AS(optimal_T_from_posterior(kl(), 0.0), DomainError);

  CHECK(posterior_from_T(kl(), 1.0) == doctest::Approx(1.0));
  CHECK(posterior_from_T(sl(), -0.5) == doctest::Approx(1.0));
  CHECK(posterior_from_T(gan(), std::log(0.7 / 1.7)) == doctest::Approx(0.7).epsilon(1e-14));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> p_dist(1e-3, 1.0);
  std::uniform_real_distribution<double> log_u(std::log(1e-3), std::log(1e3));
  for (const auto* spec : {&kl(), &gan(), &sl()}) {
    double worst_p = 0.0;
    double worst_u = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const double p = p_dist(rng);
      worst_p = std::max(worst_p, std::abs(posterior_from_T(*spec, optimal_T_from_posterior(*spec, p)) - p) / p);
      const double u = std::exp(log_u(rng));
      worst_u = std::max(worst_u, std::abs(conj_prime(*spec, generator_prime(*spec, u)) - u) / u);
    }
    CAPTURE(to_string(spec->id));
    CHECK(worst_p <= 1e-9);
    CHECK(worst_u <= 1e-9);
  }
}

TEST_CASE("elementwise overloads keep shape and check the domain") {
  Eigen::MatrixXd t(2, 2);
  t << -0.5, -0.25, -0.75, -0.1;
  const Eigen::MatrixXd p = conj_prime(sl(), t);
  REQUIRE(p.rows() == 2);
  REQUIRE(p.cols() == 2);
  CHECK(p(0, 0) == doctest::Approx(1.0));
  CHECK(p(1, 0) == doctest::Approx(1.0 / 0.75 - 1.0));
  t(1, 1) = 0.2;
  CHECK_THROWS_AS(conj_prime(sl(), t), DomainError);
  const Eigen::Vector3f pf(0.2f, 0.3f, 0.5f);
  const Eigen::Vector3f tf = optimal_T_from_posterior(kl(), pf);
  CHECK(tf(2) == doctest::Approx(std::log(0.5) + 1.0).epsilon(1e-6));
}

TEST_CASE("conj_second is positive and matches differences of conj_prime") {
  for (const auto* spec : {&kl(), &gan(), &sl()}) {
    for (double u = 1e-3; u < 2.0; u *= 1.7) {
      const double t = generator_prime(*spec, u);
      const double h = 1e-5 * std::abs(t) + 1e-8;
      const double fd = (conj_prime(*spec, t + h) - conj_prime(*spec, t - h)) / (2 * h);
      CAPTURE(t);
      CHECK(conj_second(*spec, t) > 0.0);
      CHECK(std::abs(conj_second(*spec, t) - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("brute-force conjugate oracle") {
  SUBCASE("values") {
    CHECK(std::abs(brute_force_conjugate(kl(), 1.0, 1e3, 1'000'000) - 1.0) <= 1e-4);
    CHECK(std::abs(brute_force_conjugate(gan(), -1.0, 1e3, 1'000'000) + std::log(1 - std::exp(-1.0))) <= 1e-4);
    // SL: the grid supremum sits one below the closed form.
    CHECK(std::abs(brute_force_conjugate(sl(), -0.5, 1e3, 1'000'000) - (fenchel_conjugate(sl(), -0.5) - 1.0)) <=
          1e-4);
  }
  SUBCASE("derivatives") {
    for (const auto* spec : {&kl(), &gan(), &sl()}) {
      const ConjugateOracle oracle(*spec);
      for (double p : {0.01, 0.1, 0.5, 0.9, 1.5}) {
        const double t = optimal_T_from_posterior(*spec, p);
        const double fd = oracle.derivative(t, 1e-5 * std::abs(t) + 1e-8);
        CAPTURE(to_string(spec->id));
        CAPTURE(t);
        CHECK(std::abs(conj_prime(*spec, t) - fd) <= 1e-4);
      }
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(brute_force_conjugate(kl(), 0.0, 1e3, 100), ParameterError);
    CHECK_THROWS_AS(brute_force_conjugate(sl(), 0.5, 1e3, 10'000), DomainError);
  }
}
