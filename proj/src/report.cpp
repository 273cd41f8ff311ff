#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "csv_util.hpp"
#include "fpml/experiment.hpp"
#include "json.hpp"

namespace fpml {

namespace {

constexpr const char* kRecordHeader =
    "seed,divergence,noise,mode,test_accuracy,train_accuracy,final_objective,seconds";

std::string quote(const std::string& field) {
  if (field.find_first_of(",\"") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

// Splits one line, honouring double-quoted fields with "" escapes.
std::vector<std::string> split_quoted(const std::string& line, int line_no) {
  std::vector<std::string> fields(1);
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        in_quotes = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted field", line_no);
  return fields;
}

double field_double(const std::string& s, int line_no) {
  const auto v = detail::parse_double(s);
  if (!v) throw ParseError("expected a number, got '" + s + "'", line_no);
  return *v;
}

void check_accuracy(double acc) {
  if (!(acc >= 0.0 && acc <= 1.0)) throw ParseError("accuracy outside [0, 1]");
}

std::string percent(double mean, double sd) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << 100.0 * mean << " ± " << 100.0 * sd;
  return out.str();
}

// Display width that counts the two-byte '±' as one column.
std::size_t columns(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

std::string pad(const std::string& s, std::size_t width) {
  return s + std::string(width > columns(s) ? width - columns(s) : 0, ' ');
}

}  // namespace

void write_records_csv(const std::vector<ResultRecord>& records, std::ostream& out) {
  const auto old_precision = out.precision(17);
  out << kRecordHeader << '\n';
  for (const auto& r : records) {
    out << r.seed << ',' << quote(r.divergence) << ',' << quote(r.noise) << ',' << quote(r.mode) << ','
        << r.test_accuracy << ',' << r.train_accuracy << ',' << r.final_objective << ',' << r.seconds << '\n';
  }
  out.precision(old_precision);
}

std::vector<ResultRecord> read_records_csv(std::istream& in) {
  std::vector<ResultRecord> records;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank(line)) continue;
    if (!header_seen) {
      if (detail::trim(line) != kRecordHeader) throw ParseError("unexpected header", line_no);
      header_seen = true;
      continue;
    }
    const auto f = split_quoted(line, line_no);
    if (f.size() != 8) throw ParseError("expected 8 fields", line_no);
    const auto seed = detail::parse_integer(f[0]);
    if (!seed || *seed < 0) throw ParseError("bad seed '" + f[0] + "'", line_no);
    ResultRecord r{static_cast<std::uint64_t>(*seed), f[1], f[2], f[3], field_double(f[4], line_no),
                   field_double(f[5], line_no), field_double(f[6], line_no), field_double(f[7], line_no)};
    check_accuracy(r.test_accuracy);
    check_accuracy(r.train_accuracy);
    records.push_back(std::move(r));
  }
  if (!header_seen) throw ParseError("empty records file");
  return records;
}

void write_records_json(const std::vector<ResultRecord>& records, std::ostream& out) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& r : records) {
    doc.push_back({{"seed", r.seed},
                   {"divergence", r.divergence},
                   {"noise", r.noise},
                   {"mode", r.mode},
                   {"test_accuracy", r.test_accuracy},
                   {"train_accuracy", r.train_accuracy},
                   {"final_objective", r.final_objective},
                   {"seconds", r.seconds}});
  }
  out << doc.dump(2) << '\n';
}

std::vector<ResultRecord> read_records_json(std::istream& in) {
  std::vector<ResultRecord> records;
  try {
    const auto doc = nlohmann::json::parse(in);
    if (!doc.is_array()) throw ParseError("records JSON must be an array");
    for (const auto& j : doc) {
      ResultRecord r{j.at("seed").get<std::uint64_t>(),          j.at("divergence").get<std::string>(),
                     j.at("noise").get<std::string>(),            j.at("mode").get<std::string>(),
                     j.at("test_accuracy").get<double>(),         j.at("train_accuracy").get<double>(),
                     j.at("final_objective").get<double>(),       j.at("seconds").get<double>()};
      check_accuracy(r.test_accuracy);
      check_accuracy(r.train_accuracy);
      records.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& err) {
    throw ParseError(std::string("malformed records JSON: ") + err.what());
  }
  return records;
}

std::vector<ResultRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  in >> std::ws;
  return in.peek() == '[' ? read_records_json(in) : read_records_csv(in);
}

std::vector<SummaryRow> summarize(const std::vector<ResultRecord>& records) {
  std::vector<SummaryRow> rows;
  std::vector<std::vector<double>> values;
  for (const auto& r : records) {
    std::size_t i = 0;
    while (i < rows.size() &&
           !(rows[i].divergence == r.divergence && rows[i].noise == r.noise && rows[i].mode == r.mode)) {
      ++i;
    }
    if (i == rows.size()) {
      rows.push_back({r.divergence, r.noise, r.mode, 0, 0.0, 0.0});
      values.emplace_back();
    }
    values[i].push_back(r.test_accuracy);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& v = values[i];
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    rows[i].runs = static_cast<long>(v.size());
    rows[i].mean_test_accuracy = mean;
    rows[i].std_test_accuracy = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  }
  return rows;
}

ReportFormat parse_report_format(std::string_view name) {
  if (name == "csv") return ReportFormat::Csv;
  if (name == "json") return ReportFormat::Json;
  if (name == "table") return ReportFormat::Table;
  throw ParameterError("unknown format '" + std::string(name) + "' (expected csv, json or table)");
}

std::string report(const std::vector<ResultRecord>& records, ReportFormat format) {
  if (records.empty()) throw ParameterError("no records to report");
  const auto rows = summarize(records);
  std::ostringstream out;
  out.precision(17);

  if (format == ReportFormat::Csv) {
    out << "divergence,noise,mode,runs,mean_test_accuracy,std_test_accuracy\n";
    for (const auto& r : rows) {
      out << quote(r.divergence) << ',' << quote(r.noise) << ',' << quote(r.mode) << ',' << r.runs << ','
          << r.mean_test_accuracy << ',' << r.std_test_accuracy << '\n';
    }
    return out.str();
  }
  if (format == ReportFormat::Json) {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& r : rows) {
      doc.push_back({{"divergence", r.divergence},
                     {"noise", r.noise},
                     {"mode", r.mode},
                     {"runs", r.runs},
                     {"mean_test_accuracy", r.mean_test_accuracy},
                     {"std_test_accuracy", r.std_test_accuracy}});
    }
    return doc.dump(2) + "\n";
  }

  // Text table, accuracies in percent.
  const RunMode order[] = {RunMode::NoCorrection, RunMode::ObjectiveCorrection, RunMode::PosteriorCorrection,
                           RunMode::NoNoise};
  std::vector<std::pair<std::string, std::string>> keys;  // (divergence, noise) in first-seen order
  std::map<std::tuple<std::string, std::string, std::string>, const SummaryRow*> cells;
  for (const auto& r : rows) {
    const std::pair<std::string, std::string> key{r.divergence, r.noise};
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
    cells[{r.divergence, r.noise, r.mode}] = &r;
  }

  std::vector<std::vector<std::string>> table;
  table.push_back({"Div.", "Noise"});
  for (RunMode m : order) table[0].emplace_back(column_title(m));
  for (const auto& [div, noise] : keys) {
    std::vector<std::string> line{div, noise};
    for (RunMode m : order) {
      const auto it = cells.find({div, noise, std::string(to_string(m))});
      line.push_back(it == cells.end() ? "-" : percent(it->second->mean_test_accuracy, it->second->std_test_accuracy));
    }
    table.push_back(std::move(line));
  }
  std::vector<std::size_t> width(table[0].size(), 0);
  for (const auto& line : table) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], columns(line[c]));
  }
  for (const auto& line : table) {
    std::string text;
    for (std::size_t c = 0; c < line.size(); ++c) text += (c ? " | " : "") + pad(line[c], width[c]);
    while (!text.empty() && text.back() == ' ') text.pop_back();
    out << text << '\n';
  }
  return out.str();
}

}  // namespace fpml
