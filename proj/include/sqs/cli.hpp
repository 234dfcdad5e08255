#pragma once

// Experiment configuration and the run / table1 / analytic commands.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sqs/errors.hpp"
#include "sqs/lattice_field.hpp"
#include "sqs/selection.hpp"
#include "sqs/sqs_conditions.hpp"

namespace sqs {

inline constexpr const char* kVersion = SQS_VERSION;

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitSolver = 3,
  kExitRejectionCap = 4,
  kExitCheckFailed = 5,
};

/// Malformed or schema-violating configuration.
class ConfigError : public SpecError {
 public:
  using SpecError::SpecError;
};

struct CommandOptions {
  std::filesystem::path config;
  unsigned workers = 1;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
};

enum class ReferenceMode { none, tensor, checkerboard, harmonic, surrogate };

struct ReferenceConfig {
  ReferenceMode mode = ReferenceMode::none;
  Matrix tensor;
  int M_ref = 500;
  int N_ref = 40;
};

struct RunConfig {
  std::optional<FieldSpec> field;
  std::vector<int> N;
  SamplerConfig sampler;
  bool pair_with_classical = true;
  OfflineParams offline;
  std::filesystem::path cache_dir;
  ReferenceConfig reference;
  std::filesystem::path output;
  std::string hash;
};

struct Table1Config {
  /// Base field; eta is replaced per contrast.
  std::optional<FieldSpec> field;
  std::vector<double> contrasts;
  int N = 20;
  int r = 4;
  int M = 100;
  int calM = 2000;
  std::uint64_t base_seed = 0;
  Boundary bc = Boundary::periodic;
  SolverOptions solver;
  OfflineParams offline;
  std::filesystem::path cache_dir;
  std::filesystem::path output;
  std::string hash;
};

struct AnalyticConfig {
  std::uint64_t seed = 1;
  std::string prop2_g = "exp";
  int prop2_n = 100;
  std::size_t prop2_samples = 100000;
  double prop2_ratio_tol = 0.02;
  double prop2_bias_sigmas = 3.0;
  std::string prop3_g = "exp";
  int prop3_n = 10000;
  std::size_t prop3_samples = 20000;
  std::vector<std::pair<double, double>> prop3_windows{{1.0, 2.0}};
  double prop3_tol = 0.03;
  std::string prop4_g = "two_plus_tanh";
  std::vector<int> prop4_N{50, 100, 200};
  std::size_t prop4_samples = 100000;
  double prop4_ratio_tol = 0.05;
  double prop4_bias_lo = 0.7;
  double prop4_bias_hi = 1.3;
  double prop4_slope_tol = 0.15;
  int harmonic_environments = 100;
  int harmonic_N = 10;
  std::vector<double> harmonic_values{0.5, 1.5};
  double harmonic_tol = 1e-8;
  std::filesystem::path output;
  std::string hash;
};

/// Strict parsers: unknown keys, wrong types and invalid values raise ConfigError.
/// The seed override replaces the configured base seed before hashing.
RunConfig parse_run_config(const std::string& text, const std::optional<std::uint64_t>& seed = {});
Table1Config parse_table1_config(const std::string& text, const std::optional<std::uint64_t>& seed = {});
AnalyticConfig parse_analytic_config(const std::string& text, const std::optional<std::uint64_t>& seed = {});

/// Each command returns an ExitCode and logs progress to `log`.
int cmd_run(const CommandOptions& options, std::ostream& log);
int cmd_table1(const CommandOptions& options, std::ostream& log);
int cmd_analytic(const CommandOptions& options, std::ostream& log);

/// eta for a contrast c = (1 + eta) / (1 - eta).
double eta_from_contrast(double contrast);

}  // namespace sqs
