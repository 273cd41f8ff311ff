#include "fpml/noise.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "csv_util.hpp"

namespace fpml {

TransitionMatrix::TransitionMatrix(Eigen::MatrixXd entries) : entries_(std::move(entries)) {
  if (entries_.rows() < 2 || entries_.rows() != entries_.cols()) {
    throw DimensionError("transition matrix must be square with K >= 2");
  }
  if (!entries_.allFinite() || (entries_.array() < 0.0).any() || (entries_.array() > 1.0).any()) {
    throw ParameterError("transition matrix entries must lie in [0, 1]");
  }
  for (Eigen::Index i = 0; i < entries_.rows(); ++i) {
    const double sum = entries_.row(i).sum();
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      std::ostringstream msg;
      msg << std::setprecision(17) << "transition matrix row " << i << " sums to " << sum;
      throw ParameterError(msg.str());
    }
  }
}

std::optional<Eigen::VectorXd> TransitionMatrix::offdiag_rates(double tol) const {
  const int n = k();
  Eigen::VectorXd e(n);
  for (int j = 0; j < n; ++j) {
    const int ref = j == 0 ? 1 : 0;
    e(j) = entries_(ref, j);
    for (int i = 0; i < n; ++i) {
      if (i != j && std::abs(entries_(i, j) - e(j)) > tol) return std::nullopt;
    }
  }
  return e;
}

void check_offdiag_rates(const Eigen::VectorXd& e) {
  if (e.size() < 2) throw ParameterError("flip-rate vector needs K >= 2 entries");
  if (!e.allFinite() || (e.array() < 0.0).any()) {
    throw ParameterError("flip rates must be finite and non-negative");
  }
  if (!(e.sum() < 1.0)) throw ParameterError("flip rates must satisfy sum(e) < 1");
}

TransitionMatrix symmetric_matrix(int k, double eta) {
  if (k < 2) throw ParameterError("symmetric noise needs K >= 2");
  const double limit = static_cast<double>(k - 1) / k;
  if (!(eta >= 0.0) || !(eta < limit)) {
    throw ParameterError("symmetric noise rate must satisfy 0 <= eta < (K-1)/K");
  }
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(k, k, eta / (k - 1));
  m.diagonal().setConstant(1.0 - eta);
  return TransitionMatrix(std::move(m));
}

TransitionMatrix uniform_offdiag_matrix(const Eigen::VectorXd& e) {
  check_offdiag_rates(e);
  const Eigen::Index k = e.size();
  Eigen::MatrixXd m = e.transpose().replicate(k, 1);
  const double total = e.sum();
  for (Eigen::Index i = 0; i < k; ++i) m(i, i) = 1.0 - (total - e(i));
  return TransitionMatrix(std::move(m));
}

TransitionMatrix fixture_matrix(FixtureMatrix name) {
  // Column j off the diagonal is e_j; the diagonal makes each row sum to one.
  Eigen::VectorXd e(10);
  Eigen::VectorXd diag(10);
  switch (name) {
    case FixtureMatrix::Cifar10Low:
      e << 0.02, 0.03, 0.01, 0.023, 0.017, 0.022, 0.021, 0.018, 0.019, 0.02;
      diag << 0.82, 0.83, 0.81, 0.823, 0.817, 0.822, 0.821, 0.818, 0.819, 0.82;
      break;
    case FixtureMatrix::Cifar10High:
      e << 0.05, 0.07, 0.04, 0.05, 0.06, 0.04, 0.06, 0.07, 0.08, 0.07;
      diag << 0.46, 0.48, 0.45, 0.46, 0.47, 0.45, 0.47, 0.48, 0.49, 0.48;
      break;
  }
  Eigen::MatrixXd m = e.transpose().replicate(10, 1);
  m.diagonal() = diag;
  return TransitionMatrix(std::move(m));
}

FixtureMatrix parse_fixture(std::string_view name) {
  if (name == "cifar10_low") return FixtureMatrix::Cifar10Low;
  if (name == "cifar10_high") return FixtureMatrix::Cifar10High;
  throw ParameterError("unknown fixture matrix '" + std::string(name) + "'");
}

TransitionMatrix transition_matrix(const NoiseParams& params, int k) {
  return std::visit(
      [k](const auto& kind) -> TransitionMatrix {
        using Kind = std::decay_t<decltype(kind)>;
        if constexpr (std::is_same_v<Kind, SymmetricNoise>) {
          return symmetric_matrix(k, kind.eta);
        } else if constexpr (std::is_same_v<Kind, UniformOffDiagonalNoise>) {
          if (kind.e.size() != k) throw DimensionError("flip-rate vector length differs from K");
          return uniform_offdiag_matrix(kind.e);
        } else {
          if (kind.matrix.k() != k) throw DimensionError("custom transition matrix size differs from K");
          return kind.matrix;
        }
      },
      params.kind);
}

Eigen::VectorXd offdiag_rates(const NoiseParams& params, int k) {
  if (const auto* sym = std::get_if<SymmetricNoise>(&params.kind)) {
    symmetric_matrix(k, sym->eta);  // validates eta against K
    return Eigen::VectorXd::Constant(k, sym->eta / (k - 1));
  }
  if (const auto* uod = std::get_if<UniformOffDiagonalNoise>(&params.kind)) {
    if (uod->e.size() != k) throw DimensionError("flip-rate vector length differs from K");
    check_offdiag_rates(uod->e);
    return uod->e;
  }
  throw ParameterError("corrections need symmetric or uniform off-diagonal noise, not a custom matrix");
}

std::string describe(const NoiseParams& params) {
  std::ostringstream out;
  out << std::setprecision(6);
  std::visit(
      [&out](const auto& kind) {
        using Kind = std::decay_t<decltype(kind)>;
        if constexpr (std::is_same_v<Kind, SymmetricNoise>) {
          out << "sym(" << kind.eta << ')';
        } else if constexpr (std::is_same_v<Kind, UniformOffDiagonalNoise>) {
          out << "uod(";
          for (Eigen::Index j = 0; j < kind.e.size(); ++j) out << (j ? " " : "") << kind.e(j);
          out << ')';
        } else {
          out << "custom(" << kind.matrix.k() << 'x' << kind.matrix.k() << ')';
        }
      },
      params.kind);
  return out.str();
}

LabeledDataset::LabeledDataset(Eigen::MatrixXd features, Eigen::VectorXi labels, int k,
                               std::optional<NoiseParams> provenance)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      k_(k),
      provenance_(std::move(provenance)) {
  if (features_.rows() < 1 || features_.cols() < 1) {
    throw DimensionError("dataset needs at least one sample and one feature");
  }
  if (labels_.size() != features_.rows()) throw DimensionError("label count differs from sample count");
  if (k_ < 2) throw ParameterError("dataset needs K >= 2 classes");
  if (labels_.minCoeff() < 0 || labels_.maxCoeff() >= k_) {
    throw ParameterError("labels must lie in [0, K)");
  }
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

int draw_from_row(const Eigen::MatrixXd& m, int row, double u) {
  double cumulative = 0.0;
  int last_nonzero = row;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    if (m(row, j) <= 0.0) continue;
    cumulative += m(row, j);
    last_nonzero = static_cast<int>(j);
    if (u < cumulative) return last_nonzero;
  }
  return last_nonzero;  // u within rounding of 1
}

}  // namespace

double counter_uniform(std::uint64_t seed, std::uint64_t index) {
  const std::uint64_t bits = splitmix64(splitmix64(seed) ^ index);
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

LabeledDataset corrupt(const LabeledDataset& ds, const TransitionMatrix& tm, std::uint64_t seed) {
  return corrupt(ds, NoiseParams{CustomNoise{tm}, seed});
}

LabeledDataset corrupt(const LabeledDataset& ds, const NoiseParams& params) {
  if (!ds.is_clean()) throw ParameterError("dataset is already corrupted");
  const TransitionMatrix tm = transition_matrix(params, ds.k());
  Eigen::VectorXi noisy(ds.size());
  for (Eigen::Index n = 0; n < ds.size(); ++n) {
    noisy(n) = draw_from_row(tm.entries(), ds.labels()(n),
                             counter_uniform(params.seed, static_cast<std::uint64_t>(n)));
  }
  return LabeledDataset(ds.features(), std::move(noisy), ds.k(), params);
}

TransitionMatrix empirical_transition(const LabeledDataset& clean, const LabeledDataset& noisy) {
  if (clean.size() != noisy.size() || clean.k() != noisy.k() || clean.dim() != noisy.dim()) {
    throw DimensionError("datasets differ in size, dimension or class count");
  }
  if (clean.features() != noisy.features()) throw DimensionError("datasets have different features");
  const int k = clean.k();
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index n = 0; n < clean.size(); ++n) counts(clean.labels()(n), noisy.labels()(n)) += 1.0;
  for (int i = 0; i < k; ++i) {
    const double total = counts.row(i).sum();
    if (total == 0.0) {
      counts(i, i) = 1.0;
    } else {
      counts.row(i) /= total;
    }
  }
  return TransitionMatrix(std::move(counts));
}

TransitionMatrix parse_transition_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank(line)) continue;
    std::vector<double> row;
    for (const auto& field : detail::split_csv_line(line)) {
      const auto value = detail::parse_double(field);
      if (!value) throw ParseError("non-numeric entry '" + field + "'", line_no);
      row.push_back(*value);
    }
    if (!rows.empty() && row.size() != rows.front().size()) throw ParseError("ragged row", line_no);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("empty transition matrix file");
  const auto k = static_cast<Eigen::Index>(rows.size());
  if (static_cast<Eigen::Index>(rows.front().size()) != k) {
    throw ParseError("transition matrix must have K rows of K entries");
  }
  Eigen::MatrixXd m(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) m(i, j) = rows[i][j];
  }
  return TransitionMatrix(std::move(m));
}

TransitionMatrix read_transition_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return parse_transition_csv(in);
}

void write_transition_csv(const TransitionMatrix& tm, std::ostream& out) {
  const auto old_precision = out.precision(17);
  for (int i = 0; i < tm.k(); ++i) {
    for (int j = 0; j < tm.k(); ++j) out << (j ? "," : "") << tm(i, j);
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace fpml
