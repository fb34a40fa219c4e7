#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "tailcheck/cli.hpp"
#include "test_support.hpp"

using namespace tailcheck;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("tailcheck_io_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string write_file(const std::string& name, const std::string& content) {
  const fs::path p = scratch_dir() / name;
  std::ofstream(p) << content;
  return p.string();
}

std::string write_dataset(const std::string& name, const BinaryDataset& data) {
  std::ostringstream os;
  write_csv(os, data);
  return write_file(name, os.str());
}

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
  json report() const { return json::parse(out); }
};

CliRun run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  CliRun r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

BinaryDataset logistic_data(std::size_t n, std::uint64_t seed) {
  DgpSpec s;
  s.n = n;
  s.error = ErrorDist::logistic();
  s.seed = seed;
  return generate(s);
}

void unset_env() {
  for (const char* v : {"TAILCHECK_SEED", "TAILCHECK_DRAWS", "TAILCHECK_K", "TAILCHECK_ALPHA"}) ::unsetenv(v);
}

}  // namespace

TEST_CASE("load_csv drops incomplete rows with a counted warning", "[io][csv]") {
  std::istringstream in("y,x\n0,1.5\n1,\n0,2.5\n1,-3\n");
  const auto loaded = load_csv(in, ColumnMapping{});
  CHECK(loaded.data.size() == 3);
  CHECK(loaded.dropped_rows == 1);
  REQUIRE(loaded.warnings.size() == 1);
  CHECK(loaded.warnings[0].code == "dropped_rows");
  CHECK(loaded.warnings[0].count == 1);
  CHECK(loaded.data.x == std::vector<double>{1.5, 2.5, -3.0});
  CHECK(loaded.data.y == std::vector<int>{0, 0, 1});
}

TEST_CASE("load_csv accepts boolean spellings and rejects other outcomes", "[io][csv]") {
  std::istringstream ok("y,x\ntrue,1\nfalse,2\n1,3\n0,4\n");
  CHECK(load_csv(ok, ColumnMapping{}).data.y == std::vector<int>{1, 0, 1, 0});

  std::istringstream bad("y,x\n0,1\n2,5\n");
  try {
    load_csv(bad, ColumnMapping{});
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
}

TEST_CASE("load_csv names a missing column", "[io][csv]") {
  std::istringstream in("y,z\n0,1\n");
  try {
    load_csv(in, ColumnMapping{});
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("'x'") != std::string::npos);
  }
}

TEST_CASE("load_csv rejects locale decimals", "[io][csv]") {
  std::istringstream in("y,x\n0,\"1,5\"\n");
  CHECK_THROWS_AS(load_csv(in, ColumnMapping{}), ValidationError);
}

TEST_CASE("write_csv then load_csv reproduces generated data exactly", "[io][csv]") {
  SECTION("cross section") {
    const BinaryDataset d = logistic_data(2000, 5);
    std::stringstream buf;
    write_csv(buf, d);
    const auto back = load_csv(buf, ColumnMapping{});
    CHECK(back.dropped_rows == 0);
    CHECK(back.data.y == d.y);
    CHECK(back.data.x == d.x);
  }
  SECTION("dynamic panel") {
    DgpSpec s;
    s.design = Design::dynamic_panel;
    s.n = 700;
    s.periods = 3;
    s.error = ErrorDist::student_t(1.0);
    const BinaryDataset d = generate(s);
    std::stringstream buf;
    write_csv(buf, d);
    const auto back = load_csv(buf, ColumnMapping{"y", "x", "unit", "period", std::nullopt});
    CHECK(back.data.y == d.y);
    CHECK(back.data.x == d.x);
    CHECK(back.data.unit == d.unit);
    CHECK(back.data.period == d.period);
  }
}

TEST_CASE("test subcommand matches the library call", "[cli][equivalence]") {
  const BinaryDataset d = logistic_data(3000, 11);
  const std::string path = write_dataset("test_eq.csv", d);
  const auto r = run_cli({"test", "--input", path, "--k", "10", "--draws", "1000", "--format", "json"});
  REQUIRE(r.code == 0);

  TestConfig tc;
  tc.k = 10;
  tc.null_draws = 1000;
  const auto lib = run_tail_test(d, TailTestRequest{TailSelection::both, tc});
  CHECK(r.report()["results"] == to_json(lib));
  CHECK(r.report()["version"]["schema"] == kReportSchemaVersion);
}

TEST_CASE("plug-in mode matches the library call", "[cli][equivalence]") {
  BinaryDataset d = logistic_data(3000, 12);
  d.fitted_index = std::vector<double>(d.x.begin(), d.x.end());
  for (std::size_t i = 0; i < d.size(); ++i) (*d.fitted_index)[i] += 0.5;
  const std::string path = write_dataset("plugin_eq.csv", d);
  const auto r = run_cli({"test", "--input", path, "--k", "10", "--draws", "1000", "--index-col", "fitted_index",
                          "--tail", "right", "--format", "json"});
  REQUIRE(r.code == 0);
  TestConfig tc;
  tc.k = 10;
  tc.null_draws = 1000;
  const auto lib = run_fitted_index_test(d, TailTestRequest{TailSelection::right, tc});
  CHECK(r.report()["results"] == to_json(lib));
  CHECK(r.report()["results"]["plug_in"] == true);
}

TEST_CASE("panel-test subcommand matches the library call", "[cli][equivalence]") {
  DgpSpec s;
  s.design = Design::static_panel;
  s.n = 600;
  s.periods = 3;
  s.error = ErrorDist::student_t(1.0);
  const BinaryDataset d = generate(s);
  const std::string path = write_dataset("panel_eq.csv", d);
  const auto r = run_cli({"panel-test", "--input", path, "--k", "10", "--draws", "1000", "--unit-col", "unit",
                          "--period-col", "period", "--format", "json"});
  REQUIRE(r.code == 0);
  TestConfig tc;
  tc.k = 10;
  tc.null_draws = 1000;
  const auto lib = run_panel_test(d, TailTestRequest{TailSelection::both, tc});
  CHECK(r.report()["results"] == to_json(lib));
}

TEST_CASE("cv subcommand matches the library call", "[cli][equivalence]") {
  const auto r = run_cli({"cv", "--k", "3,10", "--alpha", "0.1,0.05", "--draws", "1000", "--format", "json"});
  REQUIRE(r.code == 0);
  const auto lib = build_critical_value_table({3, 10}, {0.1, 0.05}, 1000, kDefaultSeed, WeightSpec{});
  CHECK(r.report()["results"] == to_json(lib));
}

TEST_CASE("mc subcommand matches the library call", "[cli][equivalence]") {
  const auto r = run_cli({"mc", "--error", "t(1)", "--n", "400", "--k", "10", "--replications", "100", "--draws",
                          "1000", "--format", "json"});
  REQUIRE(r.code == 0);
  ExperimentGrid g;
  DgpSpec s;
  s.n = 400;
  s.error = ErrorDist::student_t(1.0);
  g.dgps = {s};
  g.k_values = {10};
  g.replications = 100;
  g.null_draws = 1000;
  CHECK(r.report()["results"] == to_json(rejection_study(g)));

  const std::string grid = write_file("grid.json", R"json({"dgps": [{"n": 400, "error": "t(1)"}],
    "k_values": [10], "replications": 100, "null_draws": 1000})json");
  const auto from_file = run_cli({"mc", "--grid-file", grid, "--format", "json"});
  REQUIRE(from_file.code == 0);
  CHECK(from_file.report()["results"] == r.report()["results"]);
}

TEST_CASE("tailfit subcommand matches the library call", "[cli][equivalence]") {
  RngStream rng(3, 0);
  std::ostringstream csv;
  csv << "x\n";
  std::vector<double> sample;
  for (int i = 0; i < 20000; ++i) {
    sample.push_back(variates::pareto(rng, 2.0));
    csv << format_double(sample.back()) << '\n';
  }
  const std::string path = write_file("tailfit.csv", csv.str());
  const auto r = run_cli({"tailfit", "--input", path, "--top-fraction", "0.01", "--format", "json"});
  REQUIRE(r.code == 0);
  CHECK(r.report()["results"] == to_json(pareto_tail_fit(sample, 0.01)));
}

TEST_CASE("same seed and input give byte-identical JSON", "[cli][determinism]") {
  const std::string path = write_dataset("det.csv", logistic_data(2000, 21));
  const std::vector<std::string> args{"test", "--input", path, "--k", "10", "--draws", "1000", "--format", "json"};
  const auto a = run_cli(args);
  set_thread_count(1);
  const auto b = run_cli(args);
  set_thread_count(0);
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
}

TEST_CASE("exit codes", "[cli][errors]") {
  const std::string tiny = write_file("tiny.csv", "y,x\n0,1\n0,2\n0,3\n1,4\n1,5\n");

  SECTION("k above the subsample size is a validation failure naming n0") {
    const auto r = run_cli({"test", "--input", tiny, "--k", "5", "--tail", "right", "--draws", "1000"});
    CHECK(r.code == 1);
    CHECK(r.err.find("n0=3") != std::string::npos);
  }
  SECTION("a diverging density is a numeric failure") {
    const std::string tie = write_file("tie.csv", "y,x\n0,3\n0,1\n0,1\n1,5\n");
    const auto r = run_cli({"test", "--input", tie, "--k", "3", "--tail", "right", "--weight-upper", "2",
                            "--draws", "1000", "--format", "json"});
    CHECK(r.code == 2);
    const json j = r.report();
    CHECK(j["error"]["code"] == "numeric_error");
    CHECK(j["results"].is_null());
  }
  SECTION("missing k") {
    const auto r = run_cli({"test", "--input", tiny});
    CHECK(r.code == 1);
    CHECK(r.err.find("--k is required") != std::string::npos);
  }
  SECTION("k below three") {
    CHECK(run_cli({"test", "--input", tiny, "--k", "2"}).code == 1);
  }
  SECTION("alpha outside (0, 1)") {
    CHECK(run_cli({"cv", "--k", "10", "--alpha", "1.5", "--draws", "1000"}).code == 1);
  }
  SECTION("unknown flag") {
    CHECK(run_cli({"test", "--input", tiny, "--k", "3", "--bogus"}).code == 1);
  }
  SECTION("missing file") {
    CHECK(run_cli({"test", "--input", (scratch_dir() / "absent.csv").string(), "--k", "3"}).code == 1);
  }
  SECTION("reject or accept both exit 0") {
    const auto r = run_cli({"test", "--input", tiny, "--k", "3", "--tail", "right", "--draws", "1000"});
    CHECK(r.code == 0);
    CHECK(r.out.find("decision at alpha=0.05") != std::string::npos);
  }
}

TEST_CASE("config precedence: flag over environment over file", "[cli][config]") {
  unset_env();
  const std::string cfg = write_file("run.cfg", "# shared settings\nk = 4\ndraws=1000\nseed=1\nalpha = 0.1\n");
  auto echoed = [&](std::vector<std::string> extra) {
    std::vector<std::string> args{"cv", "--config", cfg, "--format", "json"};
    args.insert(args.end(), extra.begin(), extra.end());
    const auto r = run_cli(args);
    REQUIRE(r.code == 0);
    return r.report()["inputs"];
  };

  json in = echoed({});
  CHECK(in["seed"] == 1);
  CHECK(in["k"] == json::array({4}));
  CHECK(in["alpha"] == json::array({0.1}));

  ::setenv("TAILCHECK_SEED", "2", 1);
  in = echoed({});
  CHECK(in["seed"] == 2);
  CHECK(in["draws"] == 1000);

  in = echoed({"--seed", "3"});
  CHECK(in["seed"] == 3);
  unset_env();

  // Defaults apply when nothing overrides them.
  const auto r = run_cli({"cv", "--k", "3", "--alpha", "0.05", "--draws", "1000", "--format", "json"});
  REQUIRE(r.code == 0);
  CHECK(r.report()["inputs"]["seed"] == kDefaultSeed);
}

TEST_CASE("output formats", "[cli][io]") {
  const std::string path = write_dataset("fmt.csv", logistic_data(2000, 31));
  const std::vector<std::string> base{"test", "--input", path, "--k", "10", "--draws", "1000"};
  auto with = [&](std::vector<std::string> extra) {
    auto args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return run_cli(args);
  };
  const auto text = with({});
  REQUIRE(text.code == 0);
  CHECK(text.out.find("two-sided combined p-value") != std::string::npos);
  CHECK(text.out.find("right") != std::string::npos);
  CHECK(text.out.find("left") != std::string::npos);

  const auto csv = with({"--format", "csv"});
  REQUIRE(csv.code == 0);
  CHECK(csv.out.rfind("period,tail,statistic,critical_value,p_value,reject,k,n_subsample\n", 0) == 0);
  CHECK(std::count(csv.out.begin(), csv.out.end(), '\n') == 3);

  const std::string out_path = (scratch_dir() / "report.json").string();
  const auto file = with({"--format", "json", "--output", out_path});
  REQUIRE(file.code == 0);
  CHECK(file.out.empty());
  std::ifstream in(out_path);
  CHECK(json::parse(in)["command"] == "test");

  CHECK(with({"--format", "xml"}).code == 1);
}

TEST_CASE("cv prints the k=10, 5% critical value", "[cli][cv]") {
  const auto r = run_cli({"cv", "--k", "10", "--alpha", "0.05", "--draws", "10000", "--format", "json"});
  REQUIRE(r.code == 0);
  const double cv = r.report()["results"]["entries"][0]["cv"].get<double>();
  CHECK(std::abs(cv - 2.22) <= 0.10);

  const auto text = run_cli({"cv", "--k", "10", "--alpha", "0.05", "--draws", "10000"});
  std::istringstream lines(text.out);
  std::string line, label;
  while (std::getline(lines, line) && line.rfind("10 ", 0) != 0) {
  }
  double printed = 0.0;
  std::istringstream(line) >> label >> printed;
  CHECK(std::abs(printed - cv) <= 0.005);
}

TEST_CASE("repeated CLI runs on logistic data keep the two-sided p-value above 5%", "[cli][size]") {
  constexpr std::size_t kSeeds = 200;
  std::size_t above = 0;
  for (std::size_t s = 0; s < kSeeds; ++s) {
    const std::string path = write_dataset("size.csv", logistic_data(5000, 1000 + s));
    const auto r = run_cli({"test", "--input", path, "--k", "50", "--format", "json"});
    REQUIRE(r.code == 0);
    if (r.report()["results"]["combined_p"].get<double>() > 0.05) ++above;
  }
  const double share = static_cast<double>(above) / kSeeds;
  INFO("share with p > 0.05: " << share);
  CHECK(std::abs(share - 0.94) <= 3.0 * tailcheck::testing::binomial_se(0.94, kSeeds));
}
