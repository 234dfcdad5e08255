#pragma once

// Classical Monte Carlo, tolerance-gated SQS sampling and best-M-of-calM selection.

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "sqs/corrector.hpp"
#include "sqs/sqs_conditions.hpp"
#include "sqs/statistics.hpp"

namespace sqs {

enum class SamplerMode { classical, sqs_tolerance, sqs_selection };

std::string to_string(SamplerMode mode);
SamplerMode parse_sampler_mode(const std::string& text);

struct SamplerConfig {
  SamplerMode mode = SamplerMode::classical;
  int N = 1;
  int r = 1;
  Boundary bc = Boundary::periodic;
  int M = 100;
  /// Trial count of the selection mode.
  int calM = 2000;
  /// Shared tolerance on the normalized scores of the tolerance mode.
  double tol = std::numeric_limits<double>::infinity();
  /// When > 0 the tolerance is lambda / sqrt(|Q_N|) instead of tol.
  double lambda = 0.0;
  bool sqs1_exact = false;
  std::uint64_t base_seed = 0;
  double weight = 0.5;
  int pilot = 200;
  std::uint64_t rejection_cap = 1'000'000;
  unsigned workers = 1;
  SolverOptions solver;

  double effective_tol(int d) const;
  void validate() const;
};

struct SampleRecord {
  std::uint64_t seed = 0;
  SQSScore score;
  HomogenizedSample sample;
};

struct RunCounters {
  std::uint64_t solves = 0;
  std::uint64_t criterion_evaluations = 0;
  std::uint64_t pilot_evaluations = 0;
};

struct RunRecord {
  SamplerConfig config;
  std::vector<SampleRecord> samples;
  ScoreNormalizers normalizers;
  std::uint64_t rejections = 0;
  double offline_ms = 0.0;
  double online_ms = 0.0;
  RunCounters counters;
};

/// Environment of seed base_seed + m for the configured sampler.
Environment draw_environment(const FieldSpec& spec, const SamplerConfig& config, std::uint64_t seed);

/// Standard deviations of err1 and err2 over `config.pilot` environments
/// drawn from a seed stream disjoint from the sampling seeds.
ScoreNormalizers pilot_normalizers(const FieldSpec& spec, const SamplerConfig& config, const OfflineTables& tables,
                                   std::uint64_t* evaluations = nullptr);

/// M environments with seeds base_seed .. base_seed + M - 1. When tables are
/// given the scores are recorded too.
RunRecord run_classical(const FieldSpec& spec, const SamplerConfig& config, const OfflineTables* tables = nullptr);

/// Draws seeds in order until M environments pass both normalized criteria.
/// Throws RejectionCapExceeded when the draw count exceeds the cap.
RunRecord run_sqs_tolerance(const FieldSpec& spec, const SamplerConfig& config, const OfflineTables& tables);

/// Scores calM environments, keeps the M best by (score, seed) and solves
/// only those. With sqs1_exact the ranking uses err2 alone.
RunRecord run_sqs_selection(const FieldSpec& spec, const SamplerConfig& config, const OfflineTables& tables);

/// Dispatches on config.mode; tables are required for the SQS modes.
RunRecord run_sampler(const FieldSpec& spec, const SamplerConfig& config, const OfflineTables* tables);

/// Entry-wise mean, unbiased variance and 95% half-width of the retained tensors.
EstimatorReport estimate(const RunRecord& record);

}  // namespace sqs
