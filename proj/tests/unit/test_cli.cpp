#include <fstream>
#include <sstream>

#include "doctest.h"
#include "sqs/cli.hpp"
#include "support.hpp"

using namespace sqs;

namespace {

std::filesystem::path write_config(const std::filesystem::path& dir, const std::string& text) {
  const auto path = dir / "config.json";
  std::ofstream(path) << text;
  return path;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

const char* kRun = R"({
  "field": {"d": 2, "eta": 0.5, "law": "bernoulli:0.5"},
  "domain": {"N": [4]},
  "sampler": {"mode": "sqs_selection", "M": 4, "calM": 20, "sqs1_exact": true, "base_seed": 3},
  "reference": {"mode": "checkerboard"}
})";

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("unknown keys and bad values are config errors") {
    CHECK_THROWS_AS(parse_run_config(R"({"field": {"d": 2, "eta": 0.5}, "domain": {"N": 4}, "extra": 1})", {}),
                    ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"field": {"d": 2, "eta": 1.5}, "domain": {"N": 4}})", {}), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"field": {"d": 2, "eta": 0.5}, "domain": {"N": "four"}})", {}), ConfigError);
    CHECK_THROWS_AS(parse_run_config("{not json", {}), ConfigError);
    CHECK_THROWS_AS(parse_table1_config(R"({"field": {"d": 2}, "contrasts": [0.5]})", {}), ConfigError);
    CHECK_THROWS_AS(parse_analytic_config(R"({"prop3": {"windows": [[2, 1]]}})", {}), ConfigError);
    CHECK_NOTHROW(parse_analytic_config("{}", {}));
  }

  TEST_CASE("seed override changes the config hash") {
    const RunConfig a = parse_run_config(kRun, {});
    const RunConfig b = parse_run_config(kRun, 99);
    CHECK(a.sampler.base_seed == 3);
    CHECK(b.sampler.base_seed == 99);
    CHECK(a.hash != b.hash);
    CHECK(parse_run_config(kRun, {}).hash == a.hash);
  }

  TEST_CASE("contrast to eta") {
    CHECK(eta_from_contrast(3.0) == doctest::Approx(0.5));
    CHECK(eta_from_contrast(1.0) == 0.0);
    CHECK_THROWS_AS(eta_from_contrast(0.5), ConfigError);
  }

  TEST_CASE("invalid config exits 2 and writes nothing") {
    const auto dir = test::scratch_dir("cli_bad");
    CommandOptions o;
    o.config = write_config(dir, R"({"field": {"d": 2, "eta": 0.5}, "domain": {"N": [4]}, "typo": true})");
    o.out = dir / "out";
    std::ostringstream log;
    CHECK(cmd_run(o, log) == kExitConfig);
    CHECK_FALSE(std::filesystem::exists(dir / "out"));
    o.config = dir / "missing.json";
    CHECK(cmd_run(o, log) == kExitConfig);
  }

  TEST_CASE("run writes hashed outputs") {
    const auto dir = test::scratch_dir("cli_run");
    CommandOptions o;
    o.config = write_config(dir, kRun);
    o.out = dir / "out";
    std::ostringstream log;
    REQUIRE(cmd_run(o, log) == kExitOk);
    const RunConfig rc = parse_run_config(kRun, {});
    for (const char* name : {"samples.csv", "summary.csv", "ratios.csv"}) {
      const std::string text = slurp(dir / "out" / name);
      CHECK(text.find("config_hash=" + rc.hash) != std::string::npos);
    }
    const std::string summary = slurp(dir / "out" / "summary.csv");
    CHECK(summary.find("sqs_selection_exact,4,A11") != std::string::npos);
    CHECK(summary.find("classical,4,A11") != std::string::npos);
    CHECK(summary.find("0.8660254038") != std::string::npos);
    CHECK(summary.find("total_error,var_ratio") != std::string::npos);
    const auto row = summary.find("sqs_selection_exact,4,A11");
    const std::string line = summary.substr(row, summary.find('\n', row) - row);
    CHECK(line.back() != ',');
    CHECK(slurp(dir / "out" / "samples.csv").find("cache=built") != std::string::npos);
    REQUIRE(cmd_run(o, log) == kExitOk);
    CHECK(slurp(dir / "out" / "samples.csv").find("cache=hit") != std::string::npos);
  }

  TEST_CASE("rejection cap exits 4") {
    const auto dir = test::scratch_dir("cli_cap");
    CommandOptions o;
    o.config = write_config(dir, R"({
      "field": {"d": 2, "eta": 0.5},
      "domain": {"N": [4]},
      "sampler": {"mode": "sqs_tolerance", "M": 3, "tol": 1e-9, "pilot": 10, "rejection_cap": 20}
    })");
    o.out = dir / "out";
    std::ostringstream log;
    CHECK(cmd_run(o, log) == kExitRejectionCap);
  }

  TEST_CASE("solver failure exits 3") {
    const auto dir = test::scratch_dir("cli_solver");
    CommandOptions o;
    o.config = write_config(dir, R"({
      "field": {"d": 2, "eta": 0.9},
      "domain": {"N": [6]},
      "resolution": 2,
      "sampler": {"M": 2},
      "solver": {"tol": 1e-12, "max_iterations": 2}
    })");
    o.out = dir / "out";
    std::ostringstream log;
    CHECK(cmd_run(o, log) == kExitSolver);
  }

  TEST_CASE("table1 flags the unit contrast as degenerate") {
    const auto dir = test::scratch_dir("cli_table1");
    CommandOptions o;
    o.config = write_config(dir, R"({
      "field": {"d": 2},
      "contrasts": [1, 3],
      "N": 4, "resolution": 1, "M": 5, "calM": 20, "base_seed": 1
    })");
    o.out = dir / "out";
    std::ostringstream log;
    REQUIRE(cmd_table1(o, log) == kExitOk);
    const std::string text = slurp(dir / "out" / "table1.csv");
    CHECK(text.find("1,0,0,0,nan,nan,degenerate") != std::string::npos);
    CHECK(text.find("3,") != std::string::npos);
  }

  TEST_CASE("analytic command reports every check") {
    const auto dir = test::scratch_dir("cli_analytic");
    CommandOptions o;
    o.config = write_config(dir, R"({
      "seed": 5,
      "prop2": {"samples": 20000, "ratio_tolerance": 0.05},
      "prop3": {"n": 2000, "samples": 4000, "tolerance": 0.1},
      "prop4": {"samples": 5000, "N": [50, 100, 200], "slope_tolerance": 0.5},
      "harmonic": {"environments": 10}
    })");
    o.out = dir / "out";
    std::ostringstream log;
    const int code = cmd_analytic(o, log);
    const std::string text = slurp(dir / "out" / "analytic.csv");
    for (const char* check : {"prop2_ratio", "prop2_bias", "prop3_ratio", "prop4_ratio", "prop4_bias_slope",
                              "harmonic_oracle"})
      CHECK(text.find(check) != std::string::npos);
    CHECK(code == kExitOk);
  }
}
