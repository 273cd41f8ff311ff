// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: fpml_acceptance [--csv breast_cancer.csv] [--only N]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fpml/analysis.hpp"
#include "fpml/experiment.hpp"
#include "fpml/model.hpp"
#include "fpml/objective.hpp"
#include "fpml/posterior.hpp"

using namespace fpml;

namespace {

const DivergenceId kAll[] = {DivergenceId::KL, DivergenceId::GAN, DivergenceId::SL};

struct Outcome {
  bool pass;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double time_limit;  // seconds, 0 for none
  std::function<Outcome()> run;
};

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(4);
  out << v;
  return out.str();
}

Outcome conjugate_oracle() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> log_p(std::log(0.02), std::log(1.5));
  double worst = 0.0;
  for (DivergenceId id : kAll) {
    const auto& spec = divergence(id);
    const ConjugateOracle oracle(spec);
    for (int i = 0; i < 100; ++i) {
      const double t = optimal_T_from_posterior(spec, std::exp(log_p(rng)));
      const double fd = oracle.derivative(t, 1e-5 * std::abs(t) + 1e-8);
      worst = std::max(worst, std::abs(conj_prime(spec, t) - fd));
    }
  }
  return {worst <= 1e-4, "max |diff| " + fmt(worst)};
}

Outcome inverse_identity() {
  std::mt19937_64 rng(102);
  std::uniform_real_distribution<double> log_u(std::log(1e-3), std::log(1e3));
  double worst = 0.0;
  for (DivergenceId id : kAll) {
    const auto& spec = divergence(id);
    for (int i = 0; i < 10000; ++i) {
      const double u = std::exp(log_u(rng));
      worst = std::max(worst, std::abs(conj_prime(spec, generator_prime(spec, u)) - u) / u);
    }
  }
  return {worst <= 1e-9, "max rel error " + fmt(worst)};
}

Outcome from_report(const TheoremReport& r) {
  return {r.pass, r.theorem_id + " trials " + std::to_string(r.trials) + " max_error " + fmt(r.max_error) +
                      " threshold " + fmt(r.threshold)};
}

Outcome both(const TheoremReport& a, const TheoremReport& b) {
  const Outcome x = from_report(a);
  const Outcome y = from_report(b);
  return {x.pass && y.pass, x.detail + "; " + y.detail};
}

// Softmax backprop of a gradient g taken with respect to D.
Eigen::VectorXd through_softmax(const Eigen::VectorXd& d, const Eigen::VectorXd& g) {
  return d.cwiseProduct(g.array().matrix() - Eigen::VectorXd::Constant(d.size(), g.dot(d)));
}

Outcome ce_equivalence() {
  std::mt19937_64 rng(108);
  std::normal_distribution<double> normal(0.0, 2.0);
  const auto& kl = divergence(DivergenceId::KL);
  double worst_value = 0.0;
  double worst_grad = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int k = 2 + i % 9;
    Eigen::VectorXd logits(k);
    for (int j = 0; j < k; ++j) logits(j) = normal(rng);
    const Eigen::VectorXd ex = (logits.array() - logits.maxCoeff()).exp();
    const Eigen::VectorXd d = ex / ex.sum();
    const int y = i % k;
    const double ce = -std::log(d(y));
    worst_value = std::max(worst_value, std::abs(jf_simplex_kl(d, y) + ce + 1.0));
    const Eigen::VectorXd ascent = through_softmax(d, jf_simplex_grad(kl, d, y));
    Eigen::VectorXd ce_grad = d;
    ce_grad(y) -= 1.0;
    worst_grad = std::max(worst_grad, (ascent + ce_grad).cwiseAbs().maxCoeff());
  }
  return {worst_value <= 1e-12 && worst_grad <= 1e-12,
          "value " + fmt(worst_value) + ", logit gradient " + fmt(worst_grad)};
}

template <typename F>
double worst_fd(F&& value, const Eigen::VectorXd& x, const Eigen::VectorXd& g) {
  double worst = 0.0;
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(x(i)));
    probe(i) = x(i) + h;
    const double up = value(probe);
    probe(i) = x(i) - h;
    const double down = value(probe);
    probe(i) = x(i);
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(g(i) - fd) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

Outcome gradient_suite() {
  std::mt19937_64 rng(109);
  double worst_objective = 0.0;
  for (DivergenceId id : kAll) {
    const auto& spec = divergence(id);
    for (int trial = 0; trial < 100; ++trial) {
      const int k = 2 + trial % 4;
      const int y = trial % k;
      const Eigen::VectorXd e = random_offdiag_rates(k, rng, 0.8);
      const Eigen::VectorXd t = random_t_table(spec, 1, k, rng).row(0).transpose();
      worst_objective = std::max(worst_objective, worst_fd([&](const Eigen::VectorXd& v) { return jf_sample(spec, v, y); },
                                                           t, jf_grad_sample(spec, t, y)));
      worst_objective = std::max(
          worst_objective, worst_fd([&](const Eigen::VectorXd& v) { return corrected_jf_sample(spec, v, y, e); }, t,
                                    corrected_grad_sample(spec, t, y, e)));
      const Eigen::VectorXd d = random_simplex(k, rng).array() * 0.9 + 0.1 / k;
      if (id != DivergenceId::KL) {
        worst_objective = std::max(
            worst_objective, worst_fd([&](const Eigen::VectorXd& v) { return jf_simplex(spec, v, y); }, d,
                                      jf_simplex_grad(spec, d, y)));
        worst_objective = std::max(
            worst_objective,
            worst_fd([&](const Eigen::VectorXd& v) { return corrected_simplex_sample(spec, v, y, e); }, d,
                     corrected_simplex_grad(spec, d, y, e)));
      }
    }
  }

  std::mt19937_64 data_rng(110);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd x(6, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(data_rng);
  const Eigen::VectorXi labels = (Eigen::VectorXi(6) << 0, 1, 1, 0, 1, 0).finished();
  double worst_network = 0.0;
  for (DivergenceId id : kAll) {
    for (Head head : {Head::RawT, Head::SimplexD}) {
      for (const Eigen::VectorXd& e :
           {Eigen::VectorXd(Eigen::Vector2d::Zero()), Eigen::VectorXd(Eigen::Vector2d(0.1, 0.3))}) {
        NetworkModel model = init(MlpSpec{{2, 3, 2}, Activation::Tanh, head, id}, 7);
        const Eigen::VectorXd theta = flatten_parameters(model);
        const Eigen::VectorXd g = flatten_gradient(objective_and_gradient(model, x, labels, e));
        worst_network = std::max(worst_network, worst_fd(
                                                    [&](const Eigen::VectorXd& p) {
                                                      assign_parameters(model, p);
                                                      return objective_and_gradient(model, x, labels, e).value;
                                                    },
                                                    theta, g));
      }
    }
  }
  return {worst_objective <= 1e-5 && worst_network <= 1e-5,
          "objectives " + fmt(worst_objective) + ", network " + fmt(worst_network)};
}

Outcome active_passive() {
  std::mt19937_64 rng(114);
  double worst = 0.0;
  bool local = true;
  for (int i = 0; i < 10000; ++i) {
    const auto& spec = divergence(kAll[i % 3]);
    const int k = 2 + i % 9;
    const int y = i % k;
    Eigen::VectorXd t = random_t_table(spec, 1, k, rng).row(0).transpose();
    const auto split = active_passive_split(spec, t, y);
    worst = std::max(worst, std::abs(split.active + split.passive - jf_sample(spec, t, y)));
    const Eigen::VectorXd fresh = random_t_table(spec, 1, k, rng).row(0).transpose();
    Eigen::VectorXd others = fresh;
    others(y) = t(y);
    Eigen::VectorXd label_only = t;
    label_only(y) = fresh(y);
    local = local && active_passive_split(spec, others, y).active == split.active &&
            active_passive_split(spec, label_only, y).passive == split.passive;
  }
  return {worst <= 1e-12 && local, "max |active + passive - J| " + fmt(worst) + (local ? ", locality exact" : ", locality broken")};
}

double mean_accuracy(const std::vector<ResultRecord>& records, const std::string& divergence, RunMode mode) {
  double total = 0.0;
  int n = 0;
  for (const auto& r : records) {
    if (r.divergence == divergence && r.mode == to_string(mode)) {
      total += r.test_accuracy;
      ++n;
    }
  }
  return n ? total / n : std::nan("");
}

Outcome correction_experiment(const std::string& csv) {
  ExperimentConfig cfg;
  if (csv.empty()) {
    cfg.dataset = SyntheticSource{2, 20000, 10, 3.4, 2024};
  } else {
    cfg.dataset = CsvSource{csv};
  }
  cfg.hidden = {8};
  cfg.activation = Activation::Tanh;
  cfg.head = Head::RawT;
  cfg.divergences = {DivergenceId::KL};
  cfg.noise = NoiseParams{UniformOffDiagonalNoise{Eigen::Vector2d(0.1, 0.3)}, 12};
  cfg.train.epochs = csv.empty() ? 20 : 100;
  cfg.train.batch_size = 32;
  cfg.train.lr0 = 0.02;
  cfg.train.momentum = 0.9;
  cfg.seeds = {0, 1, 2, 3, 4};
  validate(cfg);
  const auto records = run_experiment(cfg);
  const double clean = mean_accuracy(records, "kl", RunMode::NoNoise);
  const double none = mean_accuracy(records, "kl", RunMode::NoCorrection);
  const double objective = mean_accuracy(records, "kl", RunMode::ObjectiveCorrection);
  const double posterior = mean_accuracy(records, "kl", RunMode::PosteriorCorrection);
  const double gap = clean - none;
  const bool a = clean >= 0.95;
  const bool b = objective > none && posterior > none;
  const bool c = gap > 0 && objective - none >= 0.4 * gap && posterior - none >= 0.4 * gap;
  std::cout << report(records, ReportFormat::Table);
  return {a && b && c, std::string(csv.empty() ? "synthetic stand-in" : "breast cancer CSV") + ": clean " +
                           fmt(clean) + ", no-cor " + fmt(none) + ", objective " + fmt(objective) + ", posterior " +
                           fmt(posterior) + " (a " + (a ? "ok" : "no") + ", b " + (b ? "ok" : "no") + ", c " +
                           (c ? "ok" : "no") + ")"};
}

Outcome symmetric_robustness() {
  ExperimentConfig cfg;
  cfg.dataset = SyntheticSource{3, 6000, 2, 3.0, 77};
  cfg.hidden = {32};
  cfg.head = Head::SimplexD;
  cfg.divergences = {DivergenceId::KL, DivergenceId::GAN};
  cfg.modes = {RunMode::NoNoise, RunMode::NoCorrection};
  cfg.noise = NoiseParams{SymmetricNoise{0.3}, 13};
  cfg.train.epochs = 20;
  cfg.seeds = {0, 1, 2, 3, 4};
  validate(cfg);
  const auto records = run_experiment(cfg);
  std::cout << report(records, ReportFormat::Table);
  bool pass = true;
  std::string detail;
  for (const char* div : {"kl", "gan"}) {
    const double clean = mean_accuracy(records, div, RunMode::NoNoise);
    const double noisy = mean_accuracy(records, div, RunMode::NoCorrection);
    pass = pass && std::abs(clean - noisy) <= 0.03;
    detail += std::string(detail.empty() ? "" : "; ") + div + " clean " + fmt(clean) + " noisy " + fmt(noisy);
  }
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::string csv;
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--csv" && i + 1 < argc) {
      csv = argv[++i];
    } else if (arg == "--only" && i + 1 < argc) {
      only = std::stoi(argv[++i]);
    } else {
      std::cerr << "usage: fpml_acceptance [--csv FILE] [--only N]\n";
      return 2;
    }
  }

  const std::vector<Criterion> criteria = {
      {1, "conjugate derivative vs brute-force oracle", 30, conjugate_oracle},
      {2, "conjugate derivative inverts the generator derivative", 1, inverse_identity},
      {3, "binary noisy objective identity", 5, [] { return from_report(check_noisy_identity(2, 100, 103)); }},
      {4, "multiclass noisy objective identity", 5, [] { return from_report(check_noisy_identity(5, 100, 104)); }},
      {5, "closed-form noisy optimum vs golden section", 30,
       [] { return both(check_closed_form_optimum(2, 100, 105), check_closed_form_optimum(5, 100, 205)); }},
      {6, "argmax preserved under symmetric noise", 10, [] { return from_report(check_argmax_invariance(10000, 106)); }},
      {7, "posterior correction restores the argmax", 5, [] { return from_report(check_posterior_correction(10000, 107)); }},
      {8, "KL simplex objective equals negative cross-entropy minus one", 0, ce_equivalence},
      {9, "objective and backprop gradients vs finite differences", 0, gradient_suite},
      {10, "near-convergence bias bound", 0, [] { return from_report(check_bias_bound(10000, 110)); }},
      {11, "bias expression error shrinks with delta", 0, [] { return from_report(check_bias_order(1000, 111)); }},
      {12, "objective and posterior correction on binary data", 300, [&] { return correction_experiment(csv); }},
      {13, "symmetric-noise robustness without correction", 300, symmetric_robustness},
      {14, "active/passive decomposition", 0, active_passive},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (only && c.id != only) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& err) {
      outcome = {false, std::string("exception: ") + err.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = c.time_limit <= 0 || seconds < c.time_limit;
    if (!in_time) outcome.detail += ", over the " + fmt(c.time_limit) + " s limit";
    const bool pass = outcome.pass && in_time;
    failures += !pass;
    std::printf("%s %2d %s: %s (%.2f s)\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(), outcome.detail.c_str(),
                seconds);
    std::fflush(stdout);
  }
  return failures ? 1 : 0;
}
