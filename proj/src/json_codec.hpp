#pragma once

// JSON encoding of noise models and objective configs, shared by the model
// container and the experiment config parser.

#include <initializer_list>
#include <string>
#include <string_view>

#include "fpml/errors.hpp"
#include "fpml/noise.hpp"
#include "fpml/objective.hpp"
#include "json.hpp"

namespace fpml::detail {

using nlohmann::json;

inline void check_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                       std::string_view section) {
  if (!obj.is_object()) throw ConfigError(std::string(section) + ": expected an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (auto key : allowed) known = known || item.key() == key;
    if (!known) throw ConfigError(std::string(section) + ": unknown key '" + item.key() + "'");
  }
}

inline json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Eigen::VectorXd vector_from_json(const json& j) {
  if (!j.is_array()) throw ConfigError("expected a numeric array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vector_to_json(m.row(i).transpose()));
  return out;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw ConfigError("expected a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Eigen::VectorXd row = vector_from_json(j[static_cast<std::size_t>(i)]);
    if (row.size() != cols) throw ConfigError("ragged matrix rows");
    m.row(i) = row.transpose();
  }
  return m;
}

inline json noise_to_json(const NoiseParams& params) {
  json out;
  std::visit(
      [&out](const auto& kind) {
        using Kind = std::decay_t<decltype(kind)>;
        if constexpr (std::is_same_v<Kind, SymmetricNoise>) {
          out = {{"kind", "symmetric"}, {"eta", kind.eta}};
        } else if constexpr (std::is_same_v<Kind, UniformOffDiagonalNoise>) {
          out = {{"kind", "uniform"}, {"e", vector_to_json(kind.e)}};
        } else {
          out = {{"kind", "custom"}, {"matrix", matrix_to_json(kind.matrix.entries())}};
        }
      },
      params.kind);
  out["seed"] = params.seed;
  return out;
}

/// Accepts kinds symmetric | uniform | fixture | custom | csv. Fixtures become
/// uniform off-diagonal rates; csv and custom matrices stay custom.
inline NoiseParams noise_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind")) throw ConfigError("noise: missing 'kind'");
  const auto kind = j.at("kind").get<std::string>();
  NoiseParams params;
  if (kind == "symmetric") {
    check_keys(j, {"kind", "eta", "seed"}, "noise");
    params.kind = SymmetricNoise{j.at("eta").get<double>()};
  } else if (kind == "uniform") {
    check_keys(j, {"kind", "e", "seed"}, "noise");
    params.kind = UniformOffDiagonalNoise{vector_from_json(j.at("e"))};
  } else if (kind == "fixture") {
    check_keys(j, {"kind", "name", "seed"}, "noise");
    const auto tm = fixture_matrix(parse_fixture(j.at("name").get<std::string>()));
    params.kind = UniformOffDiagonalNoise{*tm.offdiag_rates()};
  } else if (kind == "custom") {
    check_keys(j, {"kind", "matrix", "seed"}, "noise");
    params.kind = CustomNoise{TransitionMatrix(matrix_from_json(j.at("matrix")))};
  } else if (kind == "csv") {
    check_keys(j, {"kind", "path", "seed"}, "noise");
    params.kind = CustomNoise{read_transition_csv(j.at("path").get<std::string>())};
  } else {
    throw ConfigError("noise: unknown kind '" + kind + "'");
  }
  params.seed = j.value("seed", std::uint64_t{0});
  return params;
}

inline json objective_to_json(const ObjectiveConfig& config) {
  json correction;
  if (const auto* c = std::get_if<ObjectiveCorrection>(&config.correction)) {
    correction = {{"mode", "objective"}, {"noise", noise_to_json(c->noise)}};
  } else if (const auto* p = std::get_if<PosteriorCorrection>(&config.correction)) {
    correction = {{"mode", "posterior"}, {"noise", noise_to_json(p->noise)}};
  } else {
    correction = {{"mode", "none"}};
  }
  return {{"divergence", std::string(to_string(config.divergence))},
          {"head", std::string(to_string(config.head))},
          {"correction", correction}};
}

inline ObjectiveConfig objective_from_json(const json& j) {
  check_keys(j, {"divergence", "head", "correction"}, "objective");
  ObjectiveConfig config;
  config.divergence = parse_divergence(j.at("divergence").get<std::string>());
  config.head = parse_head(j.at("head").get<std::string>());
  const auto& correction = j.at("correction");
  check_keys(correction, {"mode", "noise"}, "objective.correction");
  const auto mode = correction.at("mode").get<std::string>();
  if (mode == "objective") {
    config.correction = ObjectiveCorrection{noise_from_json(correction.at("noise"))};
  } else if (mode == "posterior") {
    config.correction = PosteriorCorrection{noise_from_json(correction.at("noise"))};
  } else if (mode == "none") {
    config.correction = NoCorrection{};
  } else {
    throw ConfigError("objective.correction: unknown mode '" + mode + "'");
  }
  return config;
}

}  // namespace fpml::detail
