#include "fpml/experiment.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include "json_codec.hpp"

namespace fpml {

namespace {

using detail::json;

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
  return obj.contains(key) ? obj.at(key).get<T>() : fallback;
}

void parse_dataset(const json& j, ExperimentConfig& cfg) {
  const auto kind = get_or<std::string>(j, "kind", "synthetic");
  if (kind == "synthetic") {
    detail::check_keys(j, {"kind", "k", "n", "d", "separation", "seed", "test_fraction"}, "dataset");
    SyntheticSource src;
    src.k = get_or(j, "k", src.k);
    src.n = get_or(j, "n", src.n);
    src.d = get_or(j, "d", src.d);
    src.separation = get_or(j, "separation", src.separation);
    src.seed = get_or(j, "seed", src.seed);
    cfg.dataset = src;
  } else if (kind == "csv") {
    detail::check_keys(j, {"kind", "path", "test_fraction"}, "dataset");
    cfg.dataset = CsvSource{j.at("path").get<std::string>()};
  } else {
    throw ConfigError("dataset: unknown kind '" + kind + "'");
  }
  cfg.test_fraction = get_or(j, "test_fraction", cfg.test_fraction);
}

void parse_model(const json& j, ExperimentConfig& cfg) {
  detail::check_keys(j, {"hidden", "activation", "head"}, "model");
  cfg.hidden = get_or(j, "hidden", cfg.hidden);
  if (j.contains("activation")) cfg.activation = parse_activation(j.at("activation").get<std::string>());
  if (j.contains("head")) {
    const auto head = j.at("head").get<std::string>();
    cfg.head = head == "auto" ? std::nullopt : std::optional<Head>(parse_head(head));
  }
}

void parse_objective(const json& j, ExperimentConfig& cfg) {
  detail::check_keys(j, {"divergence", "modes"}, "objective");
  if (j.contains("divergence")) {
    const auto& div = j.at("divergence");
    cfg.divergences.clear();
    if (div.is_array()) {
      for (const auto& name : div) cfg.divergences.push_back(parse_divergence(name.get<std::string>()));
    } else {
      cfg.divergences.push_back(parse_divergence(div.get<std::string>()));
    }
  }
  if (j.contains("modes")) {
    cfg.modes.clear();
    for (const auto& name : j.at("modes")) cfg.modes.push_back(parse_run_mode(name.get<std::string>()));
  }
}

void parse_train(const json& j, ExperimentConfig& cfg) {
  detail::check_keys(j, {"epochs", "batch_size", "lr0", "momentum", "seeds", "snapshot_every"}, "train");
  cfg.train.epochs = get_or(j, "epochs", cfg.train.epochs);
  cfg.train.batch_size = get_or(j, "batch_size", cfg.train.batch_size);
  cfg.train.lr0 = get_or(j, "lr0", cfg.train.lr0);
  cfg.train.momentum = get_or(j, "momentum", cfg.train.momentum);
  cfg.train.snapshot_every = get_or(j, "snapshot_every", cfg.train.snapshot_every);
  cfg.seeds = get_or(j, "seeds", cfg.seeds);
}

void parse_output(const json& j, ExperimentConfig& cfg) {
  detail::check_keys(j, {"path", "format"}, "output");
  cfg.output = get_or<std::string>(j, "path", cfg.output.string());
  cfg.format = get_or(j, "format", cfg.format);
}

}  // namespace

RunMode parse_run_mode(std::string_view name) {
  if (name == "no_noise") return RunMode::NoNoise;
  if (name == "no_correction" || name == "none") return RunMode::NoCorrection;
  if (name == "objective") return RunMode::ObjectiveCorrection;
  if (name == "posterior") return RunMode::PosteriorCorrection;
  throw ConfigError("unknown mode '" + std::string(name) +
                    "' (expected no_noise, no_correction, objective or posterior)");
}

std::string_view to_string(RunMode mode) {
  switch (mode) {
    case RunMode::NoNoise: return "no_noise";
    case RunMode::NoCorrection: return "no_correction";
    case RunMode::ObjectiveCorrection: return "objective";
    case RunMode::PosteriorCorrection: return "posterior";
  }
  return "?";
}

std::string_view column_title(RunMode mode) {
  switch (mode) {
    case RunMode::NoNoise: return "No Noise";
    case RunMode::NoCorrection: return "No Cor.";
    case RunMode::ObjectiveCorrection: return "O.F. Cor.";
    case RunMode::PosteriorCorrection: return "P. Cor.";
  }
  return "?";
}

ExperimentConfig parse_experiment_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& err) {
    throw ConfigError(std::string("config is not valid JSON: ") + err.what());
  }
  ExperimentConfig cfg;
  try {
    detail::check_keys(doc, {"dataset", "model", "objective", "noise", "train", "output"}, "config");
    if (doc.contains("dataset")) parse_dataset(doc.at("dataset"), cfg);
    if (doc.contains("model")) parse_model(doc.at("model"), cfg);
    if (doc.contains("objective")) parse_objective(doc.at("objective"), cfg);
    if (doc.contains("noise") && !doc.at("noise").is_null()) cfg.noise = detail::noise_from_json(doc.at("noise"));
    if (doc.contains("train")) parse_train(doc.at("train"), cfg);
    if (doc.contains("output")) parse_output(doc.at("output"), cfg);
  } catch (const json::exception& err) {
    throw ConfigError(std::string("config: ") + err.what());
  } catch (const ParameterError& err) {
    throw ConfigError(std::string("config: ") + err.what());
  } catch (const ParseError& err) {
    throw ConfigError(std::string("config: ") + err.what());
  }
  if (auto* csv = std::get_if<CsvSource>(&cfg.dataset); csv && csv->path.is_relative() && !base_dir.empty()) {
    csv->path = base_dir / csv->path;
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment_config(buffer.str(), path.parent_path());
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.seeds.empty()) throw ConfigError("train.seeds must not be empty");
  if (cfg.divergences.empty()) throw ConfigError("objective.divergence must name at least one divergence");
  if (cfg.modes.empty()) throw ConfigError("objective.modes must not be empty");
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
  for (int width : cfg.hidden) {
    if (width < 1) throw ConfigError("model.hidden widths must be positive");
  }
  if (const auto* csv = std::get_if<CsvSource>(&cfg.dataset)) {
    if (!std::filesystem::exists(csv->path)) throw ConfigError("dataset file not found: " + csv->path.string());
  } else {
    const auto& src = std::get<SyntheticSource>(cfg.dataset);
    if (src.k < 2 || src.n < src.k || src.d < 1 || !(src.separation >= 0.0)) {
      throw ConfigError("dataset: need k >= 2, n >= k, d >= 1, separation >= 0");
    }
  }
  try {
    validate(cfg.train);
    parse_report_format(cfg.format);
  } catch (const ParameterError& err) {
    throw ConfigError(err.what());
  }
  for (RunMode mode : cfg.modes) {
    if ((mode == RunMode::ObjectiveCorrection || mode == RunMode::PosteriorCorrection) && cfg.noise &&
        std::holds_alternative<CustomNoise>(cfg.noise->kind) &&
        !std::get<CustomNoise>(cfg.noise->kind).matrix.offdiag_rates()) {
      throw ConfigError("correction modes need symmetric or uniform off-diagonal noise");
    }
  }
}

std::uint64_t corruption_seed(std::uint64_t run_seed, std::uint64_t noise_seed) {
  return mix64(run_seed ^ mix64(noise_seed));
}

PreparedData prepare_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  DatasetSplit split = [&] {
    if (const auto* csv = std::get_if<CsvSource>(&cfg.dataset)) return load_csv(csv->path, seed, cfg.test_fraction);
    const auto& src = std::get<SyntheticSource>(cfg.dataset);
    return split_and_standardize(make_synthetic(src.k, src.n, src.d, src.separation, src.seed).data, seed,
                                 cfg.test_fraction);
  }();
  if (!cfg.noise) return {split.train, split.train, std::move(split.test)};
  NoiseParams params = *cfg.noise;
  params.seed = corruption_seed(seed, cfg.noise->seed);
  LabeledDataset noisy = corrupt(split.train, params);
  return {std::move(split.train), std::move(noisy), std::move(split.test)};
}

MlpSpec network_spec(const ExperimentConfig& cfg, DivergenceId divergence, int d, int k) {
  MlpSpec spec;
  spec.layer_sizes.push_back(d);
  spec.layer_sizes.insert(spec.layer_sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  spec.layer_sizes.push_back(k);
  spec.activation = cfg.activation;
  spec.head = cfg.head.value_or(k == 2 ? Head::RawT : Head::SimplexD);
  spec.divergence = divergence;
  return spec;
}

NoiseParams correction_noise(const ExperimentConfig& cfg, int k) {
  if (!cfg.noise) return NoiseParams{SymmetricNoise{0.0}, 0};
  if (const auto* custom = std::get_if<CustomNoise>(&cfg.noise->kind)) {
    const auto rates = custom->matrix.offdiag_rates();
    if (!rates) throw ConfigError("correction modes need symmetric or uniform off-diagonal noise");
    return NoiseParams{UniformOffDiagonalNoise{*rates}, cfg.noise->seed};
  }
  offdiag_rates(*cfg.noise, k);  // size check
  return *cfg.noise;
}

std::vector<ResultRecord> run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  using clock = std::chrono::steady_clock;
  std::vector<ResultRecord> records;
  const std::string noise_name = cfg.noise ? describe(*cfg.noise) : "none";

  for (std::uint64_t seed : cfg.seeds) {
    const PreparedData data = prepare_data(cfg, seed);
    const int k = data.test.k();
    const NoiseParams rates = correction_noise(cfg, k);
    for (DivergenceId div : cfg.divergences) {
      const MlpSpec spec = network_spec(cfg, div, static_cast<int>(data.test.dim()), k);
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      std::optional<NetworkModel> uncorrected;

      for (RunMode mode : cfg.modes) {
        const auto start = clock::now();
        ObjectiveConfig objective{div, NoCorrection{}, spec.head};
        const LabeledDataset& train_set = mode == RunMode::NoNoise ? data.clean_train : data.noisy_train;
        if (mode == RunMode::ObjectiveCorrection) objective.correction = ObjectiveCorrection{rates};
        if (mode == RunMode::PosteriorCorrection) objective.correction = PosteriorCorrection{rates};

        NetworkModel model = [&] {
          const bool shared = mode == RunMode::NoCorrection || mode == RunMode::PosteriorCorrection;
          if (shared && uncorrected) return *uncorrected;
          try {
            NetworkModel trained = train(init(spec, seed), train_set, objective, tc).model;
            if (shared) uncorrected = trained;
            return trained;
          } catch (const TrainingError& err) {
            throw TrainingError("seed " + std::to_string(seed) + ", " + std::string(to_string(div)) + ", " +
                                std::string(to_string(mode)) + ": " + err.what());
          }
        }();

        const Evaluation on_train = evaluate(model, train_set, objective);
        const Evaluation on_test = evaluate(model, data.test, objective);
        const double seconds = std::chrono::duration<double>(clock::now() - start).count();
        records.push_back({seed, std::string(to_string(div)), noise_name,
                           std::string(to_string(mode)), on_test.accuracy, on_train.accuracy,
                           on_train.mean_objective, seconds});
      }
    }
  }
  return records;
}

}  // namespace fpml
