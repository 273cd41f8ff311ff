#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <Eigen/QR>

#include "csv_util.hpp"
#include "fpml/experiment.hpp"

namespace fpml {

LabeledDataset parse_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  int line_no = 0;
  bool seen_content = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank(line)) continue;
    const auto fields = detail::split_csv_line(line);
    const bool first = !seen_content;
    seen_content = true;
    if (first && std::none_of(fields.begin(), fields.end(),
                              [](const std::string& f) { return detail::parse_double(f).has_value(); })) {
      continue;  // header
    }
    if (fields.size() < 2) throw ParseError("need at least one feature and a label", line_no);
    if (!rows.empty() && fields.size() != rows.front().size() + 1) throw ParseError("ragged row", line_no);

    std::vector<double> row;
    for (std::size_t i = 0; i + 1 < fields.size(); ++i) {
      const auto value = detail::parse_double(fields[i]);
      if (!value || !std::isfinite(*value)) throw ParseError("non-numeric feature '" + fields[i] + "'", line_no);
      row.push_back(*value);
    }
    const auto label = detail::parse_integer(fields.back());
    if (!label) throw ParseError("label '" + fields.back() + "' is not an integer", line_no);
    if (*label < 0 || *label > 1'000'000) throw ParseError("label out of range", line_no);
    rows.push_back(std::move(row));
    labels.push_back(static_cast<int>(*label));
  }
  if (rows.empty()) throw ParseError("no data rows");

  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(rows.front().size());
  Eigen::MatrixXd x(n, d);
  Eigen::VectorXi y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rows[i][j];
    y(i) = labels[i];
  }
  const int k = y.maxCoeff() + 1;
  if (k < 2) throw ParseError("labels must cover at least two classes");
  return LabeledDataset(std::move(x), std::move(y), k);
}

LabeledDataset read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return parse_csv(in);
}

void write_csv(const LabeledDataset& data, std::ostream& out) {
  const auto old_precision = out.precision(17);
  for (Eigen::Index i = 0; i < data.dim(); ++i) out << 'x' << i << ',';
  out << "label\n";
  for (Eigen::Index n = 0; n < data.size(); ++n) {
    for (Eigen::Index i = 0; i < data.dim(); ++i) out << data.features()(n, i) << ',';
    out << data.labels()(n) << '\n';
  }
  out.precision(old_precision);
}

DatasetSplit split_and_standardize(const LabeledDataset& data, std::uint64_t seed, double test_fraction) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ParameterError("test fraction must lie in (0, 1)");
  const Eigen::Index n = data.size();
  if (n < 2) throw ParameterError("need at least two rows to split");
  const Eigen::Index n_test =
      std::clamp<Eigen::Index>(std::lround(test_fraction * static_cast<double>(n)), 1, n - 1);

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::vector<int> test_idx(order.begin(), order.begin() + n_test);
  const std::vector<int> train_idx(order.begin() + n_test, order.end());

  Eigen::MatrixXd x_train = data.features()(train_idx, Eigen::all);
  Eigen::MatrixXd x_test = data.features()(test_idx, Eigen::all);
  const Eigen::RowVectorXd mean = x_train.colwise().mean();
  Eigen::RowVectorXd scale =
      ((x_train.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(x_train.rows())).sqrt();
  for (Eigen::Index j = 0; j < scale.size(); ++j) {
    if (!(scale(j) > 0.0)) scale(j) = 1.0;
  }
  x_train = (x_train.rowwise() - mean).array().rowwise() / scale.array();
  x_test = (x_test.rowwise() - mean).array().rowwise() / scale.array();

  return {LabeledDataset(std::move(x_train), data.labels()(train_idx), data.k(), data.provenance()),
          LabeledDataset(std::move(x_test), data.labels()(test_idx), data.k(), data.provenance()), mean, scale};
}

DatasetSplit load_csv(const std::filesystem::path& path, std::uint64_t seed, double test_fraction) {
  return split_and_standardize(read_csv(path), seed, test_fraction);
}

Eigen::MatrixXd gaussian_bayes_posterior(const Eigen::MatrixXd& means, const Eigen::MatrixXd& x) {
  if (means.cols() != x.cols()) throw DimensionError("means and features differ in width");
  Eigen::MatrixXd logits(x.rows(), means.rows());
  for (Eigen::Index k = 0; k < means.rows(); ++k) {
    logits.col(k) = -0.5 * (x.rowwise() - means.row(k)).rowwise().squaredNorm();
  }
  logits = (logits.colwise() - logits.rowwise().maxCoeff()).array().exp();
  logits.array().colwise() /= logits.rowwise().sum().array();
  return logits;
}

SyntheticDataset make_synthetic(int k, int n, int d, double separation, std::uint64_t seed) {
  if (k < 2) throw ParameterError("synthetic data needs k >= 2");
  if (n < k) throw ParameterError("synthetic data needs n >= k");
  if (d < 1) throw ParameterError("synthetic data needs d >= 1");
  if (!(separation >= 0.0) || !std::isfinite(separation)) throw ParameterError("separation must be >= 0");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd g(d, d);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
  const Eigen::MatrixXd frame = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();

  Eigen::MatrixXd means(k, d);
  if (k <= d) {
    // Scaled orthonormal directions: every pair is `separation` apart.
    for (int c = 0; c < k; ++c) means.row(c) = separation / std::sqrt(2.0) * frame.col(c).transpose();
  } else if (d == 1) {
    for (int c = 0; c < k; ++c) means(c, 0) = (c - 0.5 * (k - 1)) * separation * frame(0, 0);
  } else {
    // Regular polygon in the first two frame directions; neighbours `separation` apart.
    const double radius = separation / (2.0 * std::sin(M_PI / k));
    for (int c = 0; c < k; ++c) {
      const double angle = 2.0 * M_PI * c / k;
      means.row(c) = radius * (std::cos(angle) * frame.col(0) + std::sin(angle) * frame.col(1)).transpose();
    }
  }

  Eigen::MatrixXd x(n, d);
  Eigen::VectorXi y(n);
  for (int i = 0; i < n; ++i) {
    y(i) = i % k;
    for (int j = 0; j < d; ++j) x(i, j) = means(y(i), j) + normal(rng);
  }
  Eigen::MatrixXd posterior = gaussian_bayes_posterior(means, x);
  return {LabeledDataset(std::move(x), std::move(y), k), std::move(means), std::move(posterior)};
}

double two_class_bayes_accuracy(double separation) {
  return 0.5 * std::erfc(-separation / (2.0 * std::sqrt(2.0)));
}

}  // namespace fpml
