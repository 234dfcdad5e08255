#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "sqs/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Special quasirandom structure sampling for random homogenization", "sqs"};
  app.set_version_flag("--version", std::string(sqs::kVersion));
  app.require_subcommand(1);

  sqs::CommandOptions options;
  options.workers = std::max(1u, std::thread::hardware_concurrency());
  std::string out;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", options.config, "JSON configuration file")->required();
    sub->add_option("--workers", options.workers, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", out, "Output directory (overrides the config)");
    sub->add_option("--seed", seed, "Base seed (overrides the config)");
  };
  CLI::App* run = app.add_subcommand("run", "Sample effective coefficients with one estimator");
  CLI::App* table1 = app.add_subcommand("table1", "Variance ratios across contrasts");
  CLI::App* analytic = app.add_subcommand("analytic", "Scalar and one-dimensional model checks");
  add_common(run);
  add_common(table1);
  add_common(analytic);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : sqs::kExitConfig;
  }

  auto apply = [&](CLI::App* sub) {
    if (sub->count("--out")) options.out = out;
    if (sub->count("--seed")) options.seed = seed;
  };
  if (*run) {
    apply(run);
    return sqs::cmd_run(options, std::cerr);
  }
  if (*table1) {
    apply(table1);
    return sqs::cmd_table1(options, std::cerr);
  }
  apply(analytic);
  return sqs::cmd_analytic(options, std::cerr);
}
