#pragma once

// Command-line surface: test, panel-test, cv, mc and tailfit.
//
// Settings are layered: command-line flags override TAILCHECK_* environment
// variables, which override a key=value config file (--config), which
// overrides the built-in defaults. Exit status is 0 for any completed run,
// 1 for invalid input or configuration, 2 for numerical failure.

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tailcheck/diagnostics.hpp"
#include "tailcheck/error.hpp"
#include "tailcheck/io.hpp"
#include "tailcheck/lr_test.hpp"
#include "tailcheck/mc_harness.hpp"
#include "tailcheck/parallel.hpp"

namespace tailcheck::cli {

enum class Format { json, csv, text };

struct CliConfig {
  std::string subcommand;
  std::string input;
  std::string y_col = "y";
  std::string x_col = "x";
  std::string unit_col;
  std::string period_col;
  std::string index_col;
  std::string k;
  std::string alpha;
  std::string tail = "both";
  std::size_t draws = kDefaultNullDraws;
  std::uint64_t seed = kDefaultSeed;
  bool seed_given = false;
  std::string format = "text";
  std::string output;
  double weight_lower = 0.0;
  double weight_upper = 1.0;
  std::size_t weight_nodes = 50;
  // tailfit
  double top_fraction = 0.001;
  int outcome = 0;
  // mc
  std::string grid_file;
  std::string design = "cross_section";
  std::string error = "logistic";
  std::string dominating = "t(2)";
  std::size_t n = 2000;
  std::size_t periods = 1;
  std::size_t replications = 2000;
  std::string tails = "left,right,both";
  unsigned threads = 0;
};

struct CommandOutput {
  RunReport report;
  std::string text;
  std::string csv;
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto t = csv::trim(item);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

template <class T>
T parse_number(const std::string& s, const std::string& what) {
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError(what + ": cannot parse '" + s + "'");
  return value;
}

inline std::vector<std::size_t> parse_k_list(const std::string& s) {
  std::vector<std::size_t> ks;
  for (const auto& item : split_list(s)) ks.push_back(parse_number<std::size_t>(item, "--k"));
  if (ks.empty()) throw ConfigError("--k is required");
  return ks;
}

inline std::vector<double> parse_alpha_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) out.push_back(parse_number<double>(item, "--alpha"));
  return out;
}

inline std::size_t single_k(const CliConfig& cfg) {
  if (cfg.k.empty()) throw ConfigError("--k is required (there is no default tail size)");
  const auto ks = parse_k_list(cfg.k);
  if (ks.size() != 1) throw ConfigError("--k takes a single value for this command");
  return ks.front();
}

inline double single_alpha(const CliConfig& cfg) {
  if (cfg.alpha.empty()) return 0.05;
  const auto a = parse_alpha_list(cfg.alpha);
  if (a.size() != 1) throw ConfigError("--alpha takes a single value for this command");
  return a.front();
}

inline TailSelection parse_tail(const std::string& s) {
  if (s == "right") return TailSelection::right;
  if (s == "left") return TailSelection::left;
  if (s == "both") return TailSelection::both;
  throw ConfigError("--tail must be left, right or both, got '" + s + "'");
}

inline Format parse_format(const std::string& s) {
  if (s == "json") return Format::json;
  if (s == "csv") return Format::csv;
  if (s == "text") return Format::text;
  throw ConfigError("--format must be json, csv or text, got '" + s + "'");
}

// "normal", "logistic", "t(df)", "pareto(index)", "const(value)".
inline ErrorDist parse_error_dist(const std::string& s) {
  const auto l = csv::lower(s);
  auto argument = [&](std::size_t open) {
    if (l.back() != ')') throw ConfigError("malformed distribution '" + s + "'");
    return parse_number<double>(l.substr(open + 1, l.size() - open - 2), "distribution parameter");
  };
  if (l == "normal") return ErrorDist::normal();
  if (l == "logistic") return ErrorDist::logistic();
  if (l.rfind("t(", 0) == 0) return ErrorDist::student_t(argument(1));
  if (l.rfind("pareto(", 0) == 0) return ErrorDist::pareto(argument(6));
  if (l.rfind("const(", 0) == 0) return ErrorDist::constant(argument(5));
  throw ConfigError("unknown error distribution '" + s + "'");
}

inline CovariateDist parse_covariate_dist(const std::string& s) {
  const auto e = parse_error_dist(s);
  if (e.kind == ErrorDist::Kind::student_t) return CovariateDist::student_t(e.param);
  if (e.kind == ErrorDist::Kind::pareto) return CovariateDist::pareto(e.param);
  throw ConfigError("dominating covariate must be t(df) or pareto(index), got '" + s + "'");
}

inline Design parse_design(const std::string& s) {
  if (s == "cross_section") return Design::cross_section;
  if (s == "static_panel") return Design::static_panel;
  if (s == "dynamic_panel") return Design::dynamic_panel;
  throw ConfigError("unknown design '" + s + "'");
}

inline std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

inline TestConfig test_config(const CliConfig& cfg) {
  TestConfig tc;
  tc.k = single_k(cfg);
  tc.alpha = single_alpha(cfg);
  tc.weight = {cfg.weight_lower, cfg.weight_upper, cfg.weight_nodes};
  tc.null_draws = cfg.draws;
  tc.seed = cfg.seed;
  tc.validate();
  return tc;
}

inline nlohmann::json echo_test_inputs(const CliConfig& cfg, const TestConfig& tc) {
  nlohmann::json j{{"input", cfg.input}, {"y_col", cfg.y_col},   {"x_col", cfg.x_col},
                   {"k", tc.k},          {"alpha", tc.alpha},    {"tail", cfg.tail},
                   {"draws", tc.null_draws}, {"seed", tc.seed},  {"weight", to_json(tc.weight)}};
  if (!cfg.index_col.empty()) j["index_col"] = cfg.index_col;
  if (!cfg.unit_col.empty()) j["unit_col"] = cfg.unit_col;
  if (!cfg.period_col.empty()) j["period_col"] = cfg.period_col;
  return j;
}

inline void text_result_row(std::ostream& os, const TestResult& r) {
  os << std::left << std::setw(7) << to_string(r.tail) << std::right << std::setw(12) << fixed(r.statistic, 4)
     << std::setw(16) << fixed(r.critical_value, 4) << std::setw(10) << fixed(r.p_value, 4) << std::setw(14)
     << (r.reject ? "reject" : "do not reject") << std::setw(13) << r.n_subsample << '\n';
}

inline void csv_result_row(std::ostream& os, const std::string& period, const TestResult& r) {
  os << period << ',' << to_string(r.tail) << ',' << format_double(r.statistic) << ','
     << format_double(r.critical_value) << ',' << format_double(r.p_value) << ',' << (r.reject ? "true" : "false")
     << ',' << r.k_used << ',' << r.n_subsample << '\n';
}

inline const char* kTextHeader = "tail      statistic  critical_value   p_value      decision  n_subsample\n";

}  // namespace detail

inline CommandOutput cmd_test(const CliConfig& cfg) {
  CommandOutput out;
  out.report.command = "test";
  const TestConfig tc = detail::test_config(cfg);
  out.report.inputs = detail::echo_test_inputs(cfg, tc);
  const TailTestRequest request{detail::parse_tail(cfg.tail), tc};

  ColumnMapping columns{cfg.y_col, cfg.x_col, std::nullopt, std::nullopt, std::nullopt};
  if (!cfg.index_col.empty()) columns.fitted_index = cfg.index_col;
  if (cfg.input.empty()) throw ConfigError("--input is required");
  auto loaded = load_csv(cfg.input, columns);
  out.report.warnings = loaded.warnings;

  const auto outcome = cfg.index_col.empty() ? run_tail_test(loaded.data, request)
                                             : run_fitted_index_test(loaded.data, request);
  out.report.results = to_json(outcome);

  std::ostringstream text;
  text << "tailcheck " << kToolVersion << " test" << (outcome.plug_in ? " (fitted index)" : "") << ": k=" << tc.k
       << " alpha=" << tc.alpha << " draws=" << tc.null_draws << " seed=" << tc.seed << '\n'
       << detail::kTextHeader;
  if (outcome.right) detail::text_result_row(text, *outcome.right);
  if (outcome.left) detail::text_result_row(text, *outcome.left);
  if (outcome.tail == TailSelection::both)
    text << "two-sided combined p-value: " << detail::fixed(outcome.combined_p, 4) << '\n';
  text << "decision at alpha=" << tc.alpha << ": " << (outcome.reject ? "reject" : "do not reject")
       << " the thin-tailed null\n";
  for (const auto& w : out.report.warnings) text << "warning [" << w.code << "]: " << w.message << '\n';
  out.text = text.str();

  std::ostringstream csv;
  csv << "period,tail,statistic,critical_value,p_value,reject,k,n_subsample\n";
  if (outcome.right) detail::csv_result_row(csv, "", *outcome.right);
  if (outcome.left) detail::csv_result_row(csv, "", *outcome.left);
  out.csv = csv.str();
  return out;
}

inline CommandOutput cmd_panel_test(const CliConfig& cfg) {
  CommandOutput out;
  out.report.command = "panel-test";
  const TestConfig tc = detail::test_config(cfg);
  out.report.inputs = detail::echo_test_inputs(cfg, tc);
  const TailTestRequest request{detail::parse_tail(cfg.tail), tc};
  if (cfg.input.empty()) throw ConfigError("--input is required");
  if (cfg.period_col.empty()) throw ConfigError("--period-col is required for panel-test");

  ColumnMapping columns{cfg.y_col, cfg.x_col, std::nullopt, cfg.period_col, std::nullopt};
  if (!cfg.unit_col.empty()) columns.unit = cfg.unit_col;
  auto loaded = load_csv(cfg.input, columns);
  out.report.warnings = loaded.warnings;

  const auto result = run_panel_test(loaded.data, request);
  if (!result.skipped.empty()) {
    std::ostringstream msg;
    msg << result.skipped.size() << " period/tail test(s) skipped for having fewer than k=" << tc.k
        << " subsample observations";
    out.report.warnings.push_back({"skipped_period", result.skipped.size(), msg.str()});
  }
  out.report.results = to_json(result);

  std::ostringstream text;
  text << "tailcheck " << kToolVersion << " panel-test: k=" << tc.k << " alpha=" << tc.alpha
       << " draws=" << tc.null_draws << " seed=" << tc.seed << '\n';
  std::ostringstream csv;
  csv << "period,tail,statistic,critical_value,p_value,reject,k,n_subsample\n";
  for (const auto& [period, po] : result.per_period) {
    text << "period " << period << '\n' << detail::kTextHeader;
    if (po.right) {
      detail::text_result_row(text, *po.right);
      detail::csv_result_row(csv, std::to_string(period), *po.right);
    }
    if (po.left) {
      detail::text_result_row(text, *po.left);
      detail::csv_result_row(csv, std::to_string(period), *po.left);
    }
  }
  text << "Bonferroni over " << result.n_tests << " test(s): combined p-value " << detail::fixed(result.combined_p, 4)
       << ", " << (result.reject ? "reject" : "do not reject") << " at alpha=" << tc.alpha << '\n';
  for (const auto& w : out.report.warnings) text << "warning [" << w.code << "]: " << w.message << '\n';
  out.text = text.str();
  out.csv = csv.str();
  return out;
}

inline CommandOutput cmd_cv(const CliConfig& cfg) {
  CommandOutput out;
  out.report.command = "cv";
  const auto ks = cfg.k.empty() ? default_table_ks() : detail::parse_k_list(cfg.k);
  const auto alphas = cfg.alpha.empty() ? default_alphas() : detail::parse_alpha_list(cfg.alpha);
  const WeightSpec weight{cfg.weight_lower, cfg.weight_upper, cfg.weight_nodes};
  for (std::size_t k : ks) TestConfig{k, 0.05, weight, cfg.draws, cfg.seed}.validate();
  for (double a : alphas)
    if (!(a > 0.0 && a < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  out.report.inputs = {{"k", ks}, {"alpha", alphas}, {"draws", cfg.draws}, {"seed", cfg.seed}, {"weight", to_json(weight)}};

  const auto table = build_critical_value_table(ks, alphas, cfg.draws, cfg.seed, weight);
  out.report.results = to_json(table);

  std::ostringstream text;
  text << "Critical values of the weighted likelihood-ratio test (" << cfg.draws << " null draws, seed " << cfg.seed
       << ")\n";
  text << std::left << std::setw(9) << "k \\ alpha" << std::right;
  for (double a : alphas) text << std::setw(8) << detail::fixed(a, 2);
  text << '\n';
  for (std::size_t k : ks) {
    text << std::left << std::setw(9) << k << std::right;
    for (double a : alphas) text << std::setw(8) << detail::fixed(table.entries.at({k, a}), 2);
    text << '\n';
  }
  out.text = text.str();
  std::ostringstream csv;
  write_critical_value_csv(csv, table);
  out.csv = csv.str();
  return out;
}

inline ExperimentGrid read_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open grid file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("grid file is not valid JSON: " + std::string(e.what()));
  }
  try {
    ExperimentGrid grid;
    for (const auto& d : j.at("dgps")) {
      DgpSpec spec;
      spec.design = detail::parse_design(d.value("design", "cross_section"));
      spec.n = d.at("n").get<std::size_t>();
      spec.periods = d.value("T", std::size_t{1});
      spec.error = detail::parse_error_dist(d.at("error").get<std::string>());
      spec.dominating = detail::parse_covariate_dist(d.value("dominating", std::string("t(2)")));
      spec.include_lag = d.value("include_lag", false);
      spec.auxiliaries = d.value("auxiliaries", true);
      spec.binary_p = d.value("binary_p", 0.5);
      grid.dgps.push_back(spec);
    }
    grid.k_values = j.at("k_values").get<std::vector<std::size_t>>();
    grid.alpha = j.value("alpha", 0.05);
    grid.replications = j.value("replications", std::size_t{2000});
    if (j.contains("tails")) {
      grid.tails.clear();
      for (const auto& t : j.at("tails")) grid.tails.push_back(detail::parse_tail(t.get<std::string>()));
    }
    grid.seed = j.value("seed", kDefaultSeed);
    grid.null_draws = j.value("null_draws", kDefaultNullDraws);
    return grid;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("grid file: " + std::string(e.what()));
  }
}

inline CommandOutput cmd_mc(const CliConfig& cfg) {
  CommandOutput out;
  out.report.command = "mc";
  ExperimentGrid grid;
  if (!cfg.grid_file.empty()) {
    grid = read_grid_file(cfg.grid_file);
    if (cfg.seed_given) grid.seed = cfg.seed;
  } else {
    DgpSpec spec;
    spec.design = detail::parse_design(cfg.design);
    spec.n = cfg.n;
    spec.periods = spec.design == Design::cross_section ? 1 : cfg.periods;
    spec.error = detail::parse_error_dist(cfg.error);
    spec.dominating = detail::parse_covariate_dist(cfg.dominating);
    grid.dgps = {spec};
    grid.k_values = detail::parse_k_list(cfg.k.empty() ? "10,25,50,70" : cfg.k);
    grid.alpha = detail::single_alpha(cfg);
    grid.replications = cfg.replications;
    grid.tails.clear();
    for (const auto& t : detail::split_list(cfg.tails)) grid.tails.push_back(detail::parse_tail(t));
    grid.seed = cfg.seed;
    grid.null_draws = cfg.draws;
    grid.weight = {cfg.weight_lower, cfg.weight_upper, cfg.weight_nodes};
  }
  grid.validate();

  nlohmann::json dgps = nlohmann::json::array();
  for (const auto& d : grid.dgps)
    dgps.push_back({{"design", to_string(d.design)}, {"n", d.n}, {"T", d.periods}, {"error", d.error.name()},
                    {"binary_p", d.binary_p}, {"auxiliaries", d.auxiliaries}});
  nlohmann::json tails = nlohmann::json::array();
  for (auto t : grid.tails) tails.push_back(to_string(t));
  out.report.inputs = {{"grid_file", cfg.grid_file}, {"dgps", dgps},       {"k_values", grid.k_values},
                       {"alpha", grid.alpha},         {"replications", grid.replications},
                       {"tails", tails},              {"seed", grid.seed}, {"draws", grid.null_draws}};

  const auto table = rejection_study(grid);
  out.report.results = to_json(table);
  std::size_t flagged = 0;
  for (const auto& c : table.cells) flagged += c.flagged ? 1 : 0;
  if (flagged > 0)
    out.report.warnings.push_back({"flagged_cells", flagged,
                                   std::to_string(flagged) + " cell(s) had replications with an untestable tail"});
  std::ostringstream text, csv;
  write_rejection_text(text, table);
  write_rejection_csv(csv, table);
  out.text = text.str();
  out.csv = csv.str();
  return out;
}

inline CommandOutput cmd_tailfit(const CliConfig& cfg) {
  CommandOutput out;
  out.report.command = "tailfit";
  if (cfg.input.empty()) throw ConfigError("--input is required");
  if (cfg.outcome != 0 && cfg.outcome != 1) throw ConfigError("--outcome must be 0 or 1");
  out.report.inputs = {{"input", cfg.input}, {"x_col", cfg.x_col}, {"top_fraction", cfg.top_fraction}};

  std::vector<double> sample;
  if (cfg.y_col.empty()) {
    // x only: read it through the loader with a synthetic outcome column.
    std::ifstream in(cfg.input);
    if (!in) throw IoError("cannot open '" + cfg.input + "'");
    std::string header;
    std::getline(in, header);
    std::stringstream patched;
    patched << header << ",__tailfit_y\n";
    for (std::string line; std::getline(in, line);)
      if (!csv::trim(line).empty()) patched << line << ",0\n";
    auto loaded = load_csv(patched, {"__tailfit_y", cfg.x_col, std::nullopt, std::nullopt, std::nullopt});
    out.report.warnings = loaded.warnings;
    sample = std::move(loaded.data.x);
  } else {
    out.report.inputs["y_col"] = cfg.y_col;
    out.report.inputs["outcome"] = cfg.outcome;
    auto loaded = load_csv(cfg.input, {cfg.y_col, cfg.x_col, std::nullopt, std::nullopt, std::nullopt});
    out.report.warnings = loaded.warnings;
    for (std::size_t i = 0; i < loaded.data.size(); ++i)
      if (loaded.data.y[i] == cfg.outcome) sample.push_back(loaded.data.x[i]);
  }
  const auto report = pareto_tail_fit(sample, cfg.top_fraction);
  out.report.results = to_json(report);

  std::ostringstream text;
  text << "Pareto tail fit, top " << cfg.top_fraction << " of " << sample.size() << " observations\n"
       << "  exceedances:   " << report.n_exceedances << '\n'
       << "  threshold:     " << format_double(report.threshold) << '\n'
       << "  Hill index:    " << detail::fixed(report.hill_index, 4) << '\n'
       << "  max CDF gap:   " << detail::fixed(report.max_cdf_gap(), 4) << '\n';
  for (const auto& w : out.report.warnings) text << "warning [" << w.code << "]: " << w.message << '\n';
  out.text = text.str();
  std::ostringstream csv;
  write_tailfit_csv(csv, report);
  out.csv = csv.str();
  return out;
}

namespace detail {

inline std::string env_name(const std::string& option) {
  std::string out = "TAILCHECK_";
  for (char c : option) out.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return out;
}

// key=value lines; '#' starts a comment; keys may use '_' for '-'.
inline std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto trimmed = csv::trim(line);
    if (trimmed.empty()) continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string_view::npos) throw ValidationError("config file: expected key=value", line_no);
    std::string key(csv::trim(trimmed.substr(0, eq)));
    std::string value(csv::trim(trimmed.substr(eq + 1)));
    while (!key.empty() && key.front() == '-') key.erase(0, 1);
    std::replace(key.begin(), key.end(), '_', '-');
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    out[key] = value;
  }
  return out;
}

struct App {
  CLI::App app{"Fixed-k extreme-value diagnostic for thin-tailed latent errors in binary choice models",
               "tailcheck"};
  CliConfig cfg;
  std::string config_path;
  std::map<std::string, CLI::App*> subs;

  App() {
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));
    auto add = [&](const std::string& name, const std::string& description) {
      auto* sub = app.add_subcommand(name, description);
      sub->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
      sub->add_option("--config", config_path, "key=value configuration file");
      sub->add_option("--format", cfg.format, "Output format: json, csv or text")->default_str("text");
      sub->add_option("--output", cfg.output, "Write output to this file instead of stdout");
      sub->add_option("--threads", cfg.threads, "Worker threads (default: all cores)");
      subs[name] = sub;
      return sub;
    };
    auto add_null = [&](CLI::App* sub) {
      sub->add_option("--draws", cfg.draws, "Null simulation draws")->default_val(kDefaultNullDraws);
      sub->add_option("--seed", cfg.seed, "Simulation seed")->default_val(kDefaultSeed);
      sub->add_option("--weight-lower", cfg.weight_lower, "Lower end of the uniform weight over gamma");
      sub->add_option("--weight-upper", cfg.weight_upper, "Upper end of the uniform weight over gamma");
      sub->add_option("--weight-nodes", cfg.weight_nodes, "Gauss-Legendre nodes over gamma");
    };
    auto add_test = [&](CLI::App* sub) {
      add_null(sub);
      sub->add_option("--input", cfg.input, "Input CSV");
      sub->add_option("--y-col", cfg.y_col, "Outcome column");
      sub->add_option("--x-col", cfg.x_col, "Dominating covariate column");
      sub->add_option("--k", cfg.k, "Number of tail order statistics (required)");
      sub->add_option("--alpha", cfg.alpha, "Significance level (default 0.05)");
      sub->add_option("--tail", cfg.tail, "left, right or both");
    };

    auto* test = add("test", "Cross-sectional tail test");
    add_test(test);
    test->add_option("--index-col", cfg.index_col, "Fitted linear index column (plug-in mode)");

    auto* panel = add("panel-test", "Per-period tail tests with a Bonferroni combination");
    add_test(panel);
    panel->add_option("--unit-col", cfg.unit_col, "Unit identifier column");
    panel->add_option("--period-col", cfg.period_col, "Period column (integers)");

    auto* cv = add("cv", "Simulated critical-value table");
    add_null(cv);
    cv->add_option("--k", cfg.k, "Comma-separated k values (default 10,25,50,70,100)");
    cv->add_option("--alpha", cfg.alpha, "Comma-separated levels (default 0.10,...,0.01)");

    auto* mc = add("mc", "Monte Carlo rejection-rate study");
    add_null(mc);
    mc->add_option("--grid-file", cfg.grid_file, "JSON experiment grid");
    mc->add_option("--design", cfg.design, "cross_section, static_panel or dynamic_panel");
    mc->add_option("--error", cfg.error, "normal, logistic, t(df), pareto(index), const(value)");
    mc->add_option("--dominating", cfg.dominating, "t(df) or pareto(index)");
    mc->add_option("--n", cfg.n, "Units per replication");
    mc->add_option("--T", cfg.periods, "Periods (panel designs)");
    mc->add_option("--k", cfg.k, "Comma-separated k values (default 10,25,50,70)");
    mc->add_option("--alpha", cfg.alpha, "Significance level (default 0.05)");
    mc->add_option("--replications", cfg.replications, "Replications per DGP");
    mc->add_option("--tails", cfg.tails, "Comma-separated subset of left,right,both");

    auto* tailfit = add("tailfit", "Hill estimate and Pareto fit of the upper tail");
    tailfit->add_option("--input", cfg.input, "Input CSV");
    tailfit->add_option("--x-col", cfg.x_col, "Column to fit");
    tailfit->add_option("--y-col", cfg.y_col, "Outcome column; when set only rows with --outcome are used")
        ->default_str("");
    tailfit->add_option("--outcome", cfg.outcome, "Outcome value selecting the subsample (default 0)");
    tailfit->add_option("--top-fraction", cfg.top_fraction, "Fraction of the sample treated as the tail");
    cfg.y_col = "y";
  }

  // Inserts config-file and environment settings ahead of the user's own
  // arguments; with TakeLast the user's flags win, then the environment.
  std::vector<std::string> layered(const std::vector<std::string>& args) {
    auto pos = std::find_if(args.begin(), args.end(), [&](const auto& a) { return subs.count(a) > 0; });
    if (pos == args.end()) return args;
    CLI::App* sub = subs.at(*pos);

    std::string file;
    for (auto it = args.begin(); it != args.end(); ++it) {
      if (*it == "--config" && std::next(it) != args.end()) file = *std::next(it);
      else if (it->rfind("--config=", 0) == 0) file = it->substr(9);
    }
    std::map<std::string, std::string> from_file;
    if (!file.empty()) from_file = read_config_file(file);

    std::vector<std::string> injected;
    std::vector<std::string> from_env;
    for (const CLI::Option* opt : sub->get_options()) {
      const auto& names = opt->get_lnames();
      if (names.empty()) continue;
      const std::string& name = names.front();
      if (name == "config" || name == "help" || name == "version") continue;
      if (auto it = from_file.find(name); it != from_file.end()) injected.push_back("--" + name + "=" + it->second);
      if (const char* env = std::getenv(env_name(name).c_str())) from_env.push_back("--" + name + "=" + env);
    }
    std::vector<std::string> out(args.begin(), pos + 1);
    out.insert(out.end(), injected.begin(), injected.end());
    out.insert(out.end(), from_env.begin(), from_env.end());
    out.insert(out.end(), pos + 1, args.end());
    return out;
  }
};

inline void emit(const CommandOutput& result, Format format, std::ostream& out) {
  switch (format) {
    case Format::json: out << result.report.to_json().dump(2) << '\n'; break;
    case Format::csv: out << result.csv; break;
    case Format::text: out << result.text; break;
  }
}

}  // namespace detail

// Echo of the settings as given, for reports written before validation.
inline nlohmann::json raw_inputs(const CliConfig& cfg) {
  nlohmann::json j{{"draws", cfg.draws}, {"seed", cfg.seed}};
  auto put = [&](const char* key, const std::string& v) {
    if (!v.empty()) j[key] = v;
  };
  put("input", cfg.input);
  put("k", cfg.k);
  put("alpha", cfg.alpha);
  put("tail", cfg.tail);
  put("grid_file", cfg.grid_file);
  return j;
}

inline CommandOutput dispatch(const CliConfig& cfg) {
  if (cfg.subcommand == "test") return cmd_test(cfg);
  if (cfg.subcommand == "panel-test") return cmd_panel_test(cfg);
  if (cfg.subcommand == "cv") return cmd_cv(cfg);
  if (cfg.subcommand == "mc") return cmd_mc(cfg);
  if (cfg.subcommand == "tailfit") return cmd_tailfit(cfg);
  throw ConfigError("unknown subcommand '" + cfg.subcommand + "'");
}

// Parses arguments (excluding the program name), runs the command and
// writes its output. Returns the process exit status.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  detail::App cli;
  std::vector<std::string> layered;
  try {
    layered = cli.layered(args);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  std::vector<const char*> argv{"tailcheck"};
  for (const auto& a : layered) argv.push_back(a.c_str());
  try {
    cli.app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = cli.app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  CliConfig cfg = cli.cfg;
  for (const auto& [name, sub] : cli.subs)
    if (sub->parsed()) {
      cfg.subcommand = name;
      cfg.seed_given = sub->get_option_no_throw("--seed") && sub->get_option("--seed")->count() > 0;
      if (name == "tailfit" && sub->get_option("--y-col")->count() == 0) cfg.y_col.clear();
    }

  Format format = Format::text;
  try {
    format = detail::parse_format(cfg.format);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  set_thread_count(cfg.threads);

  std::ofstream file;
  std::ostream* sink = &out;
  if (!cfg.output.empty()) {
    file.open(cfg.output);
    if (!file) {
      err << "error: cannot write '" << cfg.output << "'\n";
      return 1;
    }
    sink = &file;
  }

  try {
    detail::emit(dispatch(cfg), format, *sink);
    return 0;
  } catch (const Error& e) {
    const int code = e.code() == ErrorCode::numeric ? 2 : 1;
    err << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    if (format == Format::json) {
      RunReport report;
      report.command = cfg.subcommand;
      report.inputs = raw_inputs(cfg);
      report.results = nullptr;
      report.error = ReportError{to_string(e.code()), e.what()};
      *sink << report.to_json().dump(2) << '\n';
    }
    return code;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, out, err);
}

}  // namespace tailcheck::cli
