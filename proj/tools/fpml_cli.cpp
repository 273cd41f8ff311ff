// Command-line front end: corrupt, train, eval, verify, sweep, report.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "fpml/analysis.hpp"
#include "fpml/experiment.hpp"
#include "fpml/model.hpp"
#include "fpml/posterior.hpp"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitVerifyFailed = 2;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format;  // empty: config value, or table
  std::string in;
  std::string model;
  std::string mode;
  std::string transition;
};

// Writes to --out when given, stdout otherwise.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw fpml::ConfigError("cannot write " + path);
  out << text;
}

fpml::ExperimentConfig load_config(const Options& opt) {
  if (opt.config.empty()) throw fpml::ConfigError("--config is required");
  auto cfg = fpml::load_experiment_config(opt.config);
  if (opt.seed) cfg.seeds = {*opt.seed};
  return cfg;
}

fpml::RunMode default_mode(const fpml::ExperimentConfig& cfg) {
  return cfg.noise ? fpml::RunMode::NoCorrection : fpml::RunMode::NoNoise;
}

fpml::ObjectiveConfig objective_for(const fpml::ExperimentConfig& cfg, fpml::RunMode mode, fpml::Head head, int k) {
  fpml::ObjectiveConfig objective{cfg.divergences.front(), fpml::NoCorrection{}, head};
  if (mode == fpml::RunMode::ObjectiveCorrection || mode == fpml::RunMode::PosteriorCorrection) {
    if (!cfg.noise) throw fpml::ConfigError("correction modes need a noise section");
    const fpml::NoiseParams rates = fpml::correction_noise(cfg, k);
    if (mode == fpml::RunMode::ObjectiveCorrection) objective.correction = fpml::ObjectiveCorrection{rates};
    if (mode == fpml::RunMode::PosteriorCorrection) objective.correction = fpml::PosteriorCorrection{rates};
  }
  return objective;
}

int run_corrupt(const Options& opt) {
  if (opt.in.empty()) throw fpml::ConfigError("corrupt needs --in DATA.csv");
  const fpml::LabeledDataset clean = fpml::read_csv(opt.in);
  fpml::NoiseParams params;
  if (!opt.transition.empty()) {
    params.kind = fpml::CustomNoise{fpml::read_transition_csv(opt.transition)};
  } else {
    const auto cfg = load_config(opt);
    if (!cfg.noise) throw fpml::ConfigError("config has no noise section");
    params = *cfg.noise;
  }
  if (opt.seed) params.seed = *opt.seed;
  const fpml::LabeledDataset noisy = fpml::corrupt(clean, params);

  std::ostringstream text;
  fpml::write_csv(noisy, text);
  emit(opt.out, text.str());
  std::cerr << "noise " << fpml::describe(params) << ", empirical transition:\n";
  fpml::write_transition_csv(fpml::empirical_transition(clean, noisy), std::cerr);
  return 0;
}

int run_train(const Options& opt) {
  const auto cfg = load_config(opt);
  const std::uint64_t seed = cfg.seeds.front();
  const fpml::RunMode mode = opt.mode.empty() ? default_mode(cfg) : fpml::parse_run_mode(opt.mode);
  const fpml::PreparedData data = fpml::prepare_data(cfg, seed);
  const fpml::MlpSpec spec =
      fpml::network_spec(cfg, cfg.divergences.front(), static_cast<int>(data.test.dim()), data.test.k());
  const fpml::ObjectiveConfig objective = objective_for(cfg, mode, spec.head, data.test.k());

  fpml::TrainConfig tc = cfg.train;
  tc.seed = seed;
  const auto& train_set = mode == fpml::RunMode::NoNoise ? data.clean_train : data.noisy_train;
  const auto result = fpml::train(fpml::init(spec, seed), train_set, objective, tc, &data.test);
  const auto test_eval = fpml::evaluate(result.model, data.test, objective);

  std::cerr << "mode " << fpml::to_string(mode) << ", epochs " << tc.epochs << ", final objective "
            << (result.trace.objective.empty() ? 0.0 : result.trace.objective.back()) << ", test accuracy "
            << test_eval.accuracy << '\n';
  if (opt.out.empty()) {
    std::cout << fpml::serialize_model(result.model, objective) << '\n';
  } else {
    fpml::save_model(opt.out, result.model, objective);
  }
  return 0;
}

int run_eval(const Options& opt) {
  if (opt.model.empty()) throw fpml::ConfigError("eval needs --model MODEL.json");
  const auto saved = fpml::load_model(opt.model);
  std::optional<fpml::LabeledDataset> data;
  if (!opt.in.empty()) {
    data = fpml::read_csv(opt.in);
  } else {
    const auto cfg = load_config(opt);
    data = fpml::prepare_data(cfg, cfg.seeds.front()).test;
  }
  const auto result = fpml::evaluate(saved.model, *data, saved.objective);
  std::ostringstream text;
  text.precision(17);
  text << "accuracy," << result.accuracy << "\nmean_objective," << result.mean_objective << '\n';
  emit(opt.out, text.str());
  return 0;
}

int run_verify(const Options& opt) {
  const auto reports = fpml::verify_theorems(opt.seed.value_or(0), opt.out);
  bool all_pass = true;
  for (const auto& r : reports) {
    std::cout << (r.pass ? "PASS " : "FAIL ") << r.theorem_id << "  trials=" << r.trials
              << "  max_error=" << r.max_error << "  threshold=" << r.threshold << '\n';
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : kExitVerifyFailed;
}

int run_sweep(const Options& opt) {
  const auto cfg = load_config(opt);
  const auto records = fpml::run_experiment(cfg);
  const std::string out = opt.out.empty() ? cfg.output.string() : opt.out;
  if (!out.empty()) {
    std::ofstream file(out);
    if (!file) throw fpml::ConfigError("cannot write " + out);
    if (std::filesystem::path(out).extension() == ".json") {
      fpml::write_records_json(records, file);
    } else {
      fpml::write_records_csv(records, file);
    }
  }
  std::cout << fpml::report(records, fpml::parse_report_format(opt.format.empty() ? cfg.format : opt.format));
  return 0;
}

int run_report(const Options& opt) {
  if (opt.in.empty()) throw fpml::ConfigError("report needs --in RECORDS");
  const auto format = fpml::parse_report_format(opt.format.empty() ? "table" : opt.format);
  emit(opt.out, fpml::report(fpml::read_records(opt.in), format));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"f-divergence posterior maximization under label noise"};
  app.require_subcommand(1);
  Options opt;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "experiment config (JSON)");
    sub->add_option("--seed", opt.seed, "override the configured seed(s)");
    sub->add_option("--out", opt.out, "output path");
  };
  const auto add_format = [&](CLI::App* sub) {
    sub->add_option("--format", opt.format, "csv | json | table")->check(CLI::IsMember({"csv", "json", "table"}));
  };

  auto* corrupt = app.add_subcommand("corrupt", "flip labels of a CSV dataset");
  add_common(corrupt);
  corrupt->add_option("--in", opt.in, "dataset CSV (label last)")->required();
  corrupt->add_option("--transition", opt.transition, "K x K transition matrix CSV (instead of config noise)");

  auto* train = app.add_subcommand("train", "train one model and save it");
  add_common(train);
  train->add_option("--mode", opt.mode, "no_noise | no_correction | objective | posterior");

  auto* eval = app.add_subcommand("eval", "evaluate a saved model");
  add_common(eval);
  eval->add_option("--model", opt.model, "saved model (JSON)")->required();
  eval->add_option("--in", opt.in, "already preprocessed dataset CSV (default: config test split)");

  auto* verify = app.add_subcommand("verify", "run the theorem checks");
  add_common(verify);

  auto* sweep = app.add_subcommand("sweep", "run every seed, divergence and mode in a config");
  add_common(sweep);
  add_format(sweep);

  auto* report = app.add_subcommand("report", "summarize saved records");
  add_common(report);
  add_format(report);
  report->add_option("--in", opt.in, "records (CSV or JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? 0 : kExitConfig;
  }

  try {
    if (*corrupt) return run_corrupt(opt);
    if (*train) return run_train(opt);
    if (*eval) return run_eval(opt);
    if (*verify) return run_verify(opt);
    if (*sweep) return run_sweep(opt);
    if (*report) return run_report(opt);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}
