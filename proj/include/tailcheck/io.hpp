#pragma once

// CSV ingestion and emission, and JSON serialization of every result type.
//
// Accepted input grammar (locale independent):
//   * UTF-8, comma separated, mandatory header row, RFC 4180 double quotes.
//   * Surrounding spaces and tabs of a field are ignored.
//   * Outcome: 0, 1, true, false (case-insensitive).
//   * Reals: [-]digits[.digits][(e|E)[+|-]digits], or [-].digits...; no
//     leading '+', no thousands separators, '.' is the only decimal mark.
//   * Periods: base-10 integers.
//   * Empty, NA, NaN and +/-inf values are missing; rows with a missing value
//     in a mapped column are dropped and counted.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tailcheck/diagnostics.hpp"
#include "tailcheck/error.hpp"
#include "tailcheck/lr_test.hpp"
#include "tailcheck/mc_harness.hpp"

namespace tailcheck {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kReportSchemaVersion = 1;

struct Warning {
  std::string code;
  std::size_t count = 0;
  std::string message;
};

struct ColumnMapping {
  std::string y = "y";
  std::string x = "x";
  std::optional<std::string> unit;
  std::optional<std::string> period;
  std::optional<std::string> fitted_index;
};

struct LoadedDataset {
  BinaryDataset data;
  std::size_t dropped_rows = 0;
  std::vector<Warning> warnings;
};

namespace csv {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Splits one record. Quoted fields may contain commas and doubled quotes but
// not line breaks.
inline std::vector<std::string> split_record(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"' && trim(current).empty() && !was_quoted) {
      quoted = true;
      was_quoted = true;
      current.clear();
    } else if (c == ',') {
      fields.emplace_back(was_quoted ? current : std::string(trim(current)));
      current.clear();
      was_quoted = false;
    } else {
      current.push_back(c);
    }
  }
  if (quoted) throw ValidationError("unterminated quoted field", line_no);
  fields.emplace_back(was_quoted ? current : std::string(trim(current)));
  return fields;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline bool is_missing(std::string_view s) {
  const auto l = lower(trim(s));
  return l.empty() || l == "na" || l == "nan" || l == "-nan" || l == "inf" || l == "-inf" || l == "infinity" ||
         l == "-infinity";
}

// Parses a finite real per the grammar above; nullopt for missing values.
inline std::optional<double> parse_real(std::string_view s, std::size_t line_no, std::string_view column) {
  s = trim(s);
  if (is_missing(s)) return std::nullopt;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ValidationError("column '" + std::string(column) + "': malformed number '" + std::string(s) + "' at line " +
                              std::to_string(line_no),
                          line_no);
  if (!std::isfinite(value)) return std::nullopt;
  return value;
}

inline std::optional<int> parse_outcome(std::string_view s, std::size_t line_no, std::string_view column) {
  const auto l = lower(trim(s));
  if (l.empty() || l == "na") return std::nullopt;
  if (l == "0" || l == "false") return 0;
  if (l == "1" || l == "true") return 1;
  throw ValidationError("column '" + std::string(column) + "': outcome must be 0/1/true/false, got '" +
                            std::string(trim(s)) + "' at line " + std::to_string(line_no),
                        line_no);
}

inline std::optional<std::int64_t> parse_period(std::string_view s, std::size_t line_no, std::string_view column) {
  s = trim(s);
  if (s.empty() || lower(s) == "na") return std::nullopt;
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ValidationError("column '" + std::string(column) + "': period must be an integer, got '" + std::string(s) +
                              "' at line " + std::to_string(line_no),
                          line_no);
  return value;
}

}  // namespace csv

inline LoadedDataset load_csv(std::istream& in, const ColumnMapping& columns) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("CSV input is empty; a header row is required");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = csv::split_record(line, 1);

  auto locate = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("CSV has no column named '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t y_col = locate(columns.y);
  const std::size_t x_col = locate(columns.x);
  const std::optional<std::size_t> unit_col = columns.unit ? std::optional(locate(*columns.unit)) : std::nullopt;
  const std::optional<std::size_t> period_col =
      columns.period ? std::optional(locate(*columns.period)) : std::nullopt;
  const std::optional<std::size_t> index_col =
      columns.fitted_index ? std::optional(locate(*columns.fitted_index)) : std::nullopt;

  LoadedDataset out;
  if (index_col) out.data.fitted_index.emplace();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto fields = csv::split_record(line, line_no);
    if (fields.size() != header.size())
      throw ValidationError("line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                                " fields but the header has " + std::to_string(header.size()),
                            line_no);
    const auto y = csv::parse_outcome(fields[y_col], line_no, columns.y);
    const auto x = csv::parse_real(fields[x_col], line_no, columns.x);
    std::optional<std::int64_t> period;
    if (period_col) period = csv::parse_period(fields[*period_col], line_no, *columns.period);
    std::optional<double> fitted;
    if (index_col) fitted = csv::parse_real(fields[*index_col], line_no, *columns.fitted_index);
    const bool unit_missing = unit_col && csv::trim(fields[*unit_col]).empty();

    if (!y || !x || (period_col && !period) || (index_col && !fitted) || unit_missing) {
      ++out.dropped_rows;
      continue;
    }
    out.data.y.push_back(*y);
    out.data.x.push_back(*x);
    if (unit_col) out.data.unit.push_back(fields[*unit_col]);
    if (period_col) out.data.period.push_back(*period);
    if (index_col) out.data.fitted_index->push_back(*fitted);
  }
  if (out.dropped_rows > 0) {
    out.warnings.push_back({"dropped_rows", out.dropped_rows,
                            std::to_string(out.dropped_rows) + " row(s) with missing or non-finite values were dropped"});
  }
  out.data.validate();
  return out;
}

inline LoadedDataset load_csv(const std::string& path, const ColumnMapping& columns) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return load_csv(in, columns);
}

// Writes the dataset with shortest round-trip decimals; load_csv with the
// default column names reads it back unchanged.
inline void write_csv(std::ostream& out, const BinaryDataset& data) {
  data.validate();
  const bool units = !data.unit.empty();
  const bool periods = !data.period.empty();
  out << "y,x";
  if (units) out << ",unit";
  if (periods) out << ",period";
  if (data.fitted_index) out << ",fitted_index";
  out << '\n';
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"") == std::string::npos && csv::trim(s) == s) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q.push_back('"');
      q.push_back(c);
    }
    return q + "\"";
  };
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.y[i] << ',' << format_double(data.x[i]);
    if (units) out << ',' << quote(data.unit[i]);
    if (periods) out << ',' << data.period[i];
    if (data.fitted_index) out << ',' << format_double((*data.fitted_index)[i]);
    out << '\n';
  }
}

// JSON conversions. nlohmann::json prints doubles as shortest round-trip
// decimals.

inline nlohmann::json to_json(const WeightSpec& w) {
  return {{"kind", "uniform"}, {"lower", w.lower}, {"upper", w.upper}, {"nodes", w.nodes}};
}

inline nlohmann::json to_json(const TestResult& r) {
  return {{"tail", to_string(r.tail)},       {"statistic", r.statistic},     {"critical_value", r.critical_value},
          {"p_value", r.p_value},            {"reject", r.reject},           {"k", r.k_used},
          {"n_subsample", r.n_subsample},    {"plug_in", r.plug_in}};
}

inline nlohmann::json to_json(const TailTestOutcome& o) {
  nlohmann::json j{{"tail", to_string(o.tail)},
                   {"combined_p", o.combined_p},
                   {"reject", o.reject},
                   {"plug_in", o.plug_in},
                   {"right", nullptr},
                   {"left", nullptr}};
  if (o.right) j["right"] = to_json(*o.right);
  if (o.left) j["left"] = to_json(*o.left);
  return j;
}

inline nlohmann::json to_json(const PanelTestResult& p) {
  nlohmann::json periods = nlohmann::json::array();
  for (const auto& [period, outcome] : p.per_period) {
    nlohmann::json entry{{"period", period}, {"right", nullptr}, {"left", nullptr}};
    if (outcome.right) entry["right"] = to_json(*outcome.right);
    if (outcome.left) entry["left"] = to_json(*outcome.left);
    periods.push_back(entry);
  }
  nlohmann::json skipped = nlohmann::json::array();
  for (const auto& s : p.skipped)
    skipped.push_back({{"period", s.period}, {"tail", to_string(s.tail)}, {"n_subsample", s.n_subsample}, {"k", s.k}});
  return {{"tail", to_string(p.tail)}, {"per_period", periods},    {"skipped", skipped},
          {"n_tests", p.n_tests},      {"combined_p", p.combined_p}, {"reject", p.reject}};
}

inline nlohmann::json to_json(const CriticalValueTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [key, cv] : t.entries) rows.push_back({{"k", key.first}, {"alpha", key.second}, {"cv", cv}});
  return {{"draws", t.draws}, {"seed", t.seed}, {"entries", rows}};
}

inline nlohmann::json to_json(const RejectionTable& t) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : t.cells) {
    cells.push_back({{"dgp", c.dgp_index},       {"design", to_string(c.design)}, {"error", c.error_name},
                     {"n", c.n},                 {"T", c.periods},                {"k", c.k},
                     {"tail", to_string(c.tail)}, {"rate", c.rate},               {"rejections", c.rejections},
                     {"completed", c.completed}, {"failures", c.failures},        {"flagged", c.flagged}});
  }
  return {{"replications", t.replications}, {"seed", t.seed}, {"alpha", t.alpha}, {"cells", cells}};
}

inline nlohmann::json to_json(const TailFitReport& r) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : r.points) points.push_back({{"x", p.x}, {"empirical_cdf", p.empirical_cdf}, {"fitted_cdf", p.fitted_cdf}});
  return {{"hill_index", r.hill_index},       {"threshold", r.threshold},
          {"top_fraction", r.top_fraction},   {"n_exceedances", r.n_exceedances},
          {"max_cdf_gap", r.max_cdf_gap()},   {"points", points}};
}

struct ReportError {
  std::string code;
  std::string message;
};

// Machine-readable record of one CLI run.
struct RunReport {
  std::string command;
  nlohmann::json inputs = nlohmann::json::object();
  nlohmann::json results;
  std::vector<Warning> warnings;
  std::optional<ReportError> error;

  nlohmann::json to_json() const {
    nlohmann::json w = nlohmann::json::array();
    for (const auto& warning : warnings)
      w.push_back({{"code", warning.code}, {"count", warning.count}, {"message", warning.message}});
    nlohmann::json j{{"version", {{"schema", kReportSchemaVersion}, {"tool", kToolVersion}}},
                     {"command", command},
                     {"inputs", inputs},
                     {"results", results},
                     {"warnings", w}};
    if (error) j["error"] = {{"code", error->code}, {"message", error->message}};
    return j;
  }
};

}  // namespace tailcheck
