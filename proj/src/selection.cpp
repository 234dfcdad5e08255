#include "sqs/selection.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "sqs/errors.hpp"
#include "sqs/parallel.hpp"
#include "sqs/rng.hpp"

namespace sqs {

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kPilotStream = 0x70696c6f74ULL;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

SQSScore partial_score(const Environment& env, const LawMoments& moments, const OfflineTables* tables) {
  SQSScore s;
  s.seed = env.seed;
  s.err1 = sqs1_error(env, moments);
  s.err2 = tables ? sqs2_error(env, *tables, moments) : std::numeric_limits<double>::quiet_NaN();
  s.combined = std::numeric_limits<double>::quiet_NaN();
  return s;
}

void check_tables(const SamplerConfig& config, const FieldSpec& spec, const OfflineTables& tables) {
  if (tables.d != spec.dimension() || tables.N != config.N || tables.r != config.r)
    throw SpecError("offline tables were built for a different (d, N, r)");
  if (tables.spec_fingerprint != spec.fingerprint()) throw SpecError("offline tables were built for a different field");
}

/// Solves the retained environments in parallel; order of `records` is preserved.
void solve_records(const FieldSpec& spec, const SamplerConfig& config, std::vector<SampleRecord>& records) {
  parallel_for(records.size(), config.workers, [&](std::size_t i) {
    SampleRecord& rec = records[i];
    const Environment env = draw_environment(spec, config, rec.seed);
    CoefficientGrid grid = discretize(spec, env, config.r);
    grid.seed = rec.seed;
    try {
      rec.sample = compute_homogenized(grid, config.bc, config.solver);
    } catch (const SolverError& e) {
      throw SolverError("seed " + std::to_string(rec.seed) + ": " + e.what(), e.iterations(), e.residual());
    }
  });
}

}  // namespace

std::string to_string(SamplerMode mode) {
  switch (mode) {
    case SamplerMode::classical:
      return "classical";
    case SamplerMode::sqs_tolerance:
      return "sqs_tolerance";
    case SamplerMode::sqs_selection:
      return "sqs_selection";
  }
  return {};
}

SamplerMode parse_sampler_mode(const std::string& text) {
  if (text == "classical") return SamplerMode::classical;
  if (text == "sqs_tolerance") return SamplerMode::sqs_tolerance;
  if (text == "sqs_selection") return SamplerMode::sqs_selection;
  throw SpecError("unknown sampler mode '" + text + "'");
}

double SamplerConfig::effective_tol(int d) const {
  if (lambda > 0.0) return lambda / std::sqrt(std::pow(static_cast<double>(N), d));
  return tol;
}

void SamplerConfig::validate() const {
  if (N < 1) throw SpecError("N must be >= 1");
  if (r < 1) throw SpecError("resolution must be >= 1");
  if (M < 1) throw SpecError("M must be >= 1");
  if (mode == SamplerMode::sqs_selection && calM < M) throw SpecError("calM must be >= M");
  if (mode == SamplerMode::sqs_tolerance && !(lambda > 0.0 || tol > 0.0)) throw SpecError("tolerance must be > 0");
  if (!(weight > 0.0 && weight < 1.0)) throw SpecError("score weight must lie in (0, 1)");
  if (rejection_cap < 1) throw SpecError("rejection cap must be >= 1");
}

Environment draw_environment(const FieldSpec& spec, const SamplerConfig& config, std::uint64_t seed) {
  const DomainSpec domain{config.N, spec.dimension()};
  return config.sqs1_exact ? sample_environment_sqs1_exact(spec, domain, seed) : sample_environment(spec, domain, seed);
}

ScoreNormalizers pilot_normalizers(const FieldSpec& spec, const SamplerConfig& config, const OfflineTables& tables,
                                   std::uint64_t* evaluations) {
  const LawMoments moments = law_moments(spec);
  const std::uint64_t base = mix64(config.base_seed ^ kPilotStream);
  std::vector<SQSScore> scores(static_cast<std::size_t>(std::max(config.pilot, 0)));
  parallel_for(scores.size(), config.workers, [&](std::size_t i) {
    scores[i] = partial_score(draw_environment(spec, config, base + i), moments, &tables);
  });
  RunningMoments e1;
  RunningMoments e2;
  for (const auto& s : scores) {
    e1.add(s.err1);
    e2.add(s.err2);
  }
  if (evaluations) *evaluations += scores.size();
  ScoreNormalizers n;
  n.sigma1 = scores.size() >= 2 ? std::sqrt(e1.variance()) : 0.0;
  n.sigma2 = scores.size() >= 2 ? std::sqrt(e2.variance()) : 0.0;
  return n;
}

RunRecord run_classical(const FieldSpec& spec, const SamplerConfig& config, const OfflineTables* tables) {
  config.validate();
  if (tables) check_tables(config, spec, *tables);
  RunRecord record;
  record.config = config;
  const LawMoments moments = law_moments(spec);
  const auto start = Clock::now();
  record.samples.resize(static_cast<std::size_t>(config.M));
  for (std::size_t m = 0; m < record.samples.size(); ++m) {
    auto& rec = record.samples[m];
    rec.seed = config.base_seed + m;
    rec.score = partial_score(draw_environment(spec, config, rec.seed), moments, tables);
  }
  solve_records(spec, config, record.samples);
  record.counters.solves = record.samples.size();
  record.online_ms = elapsed_ms(start);
  return record;
}

RunRecord run_sqs_tolerance(const FieldSpec& spec, const SamplerConfig& config, const OfflineTables& tables) {
  config.validate();
  check_tables(config, spec, tables);
  RunRecord record;
  record.config = config;
  const LawMoments moments = law_moments(spec);
  auto start = Clock::now();
  record.normalizers = pilot_normalizers(spec, config, tables, &record.counters.pilot_evaluations);
  record.offline_ms = elapsed_ms(start);
  start = Clock::now();

  const double tol = config.effective_tol(spec.dimension());
  // A zero normalizer means the criterion is degenerate; compare it unnormalized.
  const double s1 = record.normalizers.sigma1 > 0.0 ? record.normalizers.sigma1 : 1.0;
  const double s2 = record.normalizers.sigma2 > 0.0 ? record.normalizers.sigma2 : 1.0;
  std::uint64_t draws = 0;
  while (record.samples.size() < static_cast<std::size_t>(config.M)) {
    if (draws >= config.rejection_cap)
      throw RejectionCapExceeded("tolerance " + std::to_string(tol) + " accepted " +
                                 std::to_string(record.samples.size()) + " of " + std::to_string(config.M) +
                                 " environments within " + std::to_string(config.rejection_cap) + " draws");
    const std::uint64_t seed = config.base_seed + draws++;
    SQSScore s = partial_score(draw_environment(spec, config, seed), moments, &tables);
    s.combined = combined_score(s.err1, s.err2, config.weight, record.normalizers);
    ++record.counters.criterion_evaluations;
    if (s.err1 / s1 <= tol && s.err2 / s2 <= tol) {
      record.samples.push_back({seed, s, {}});
    } else {
      ++record.rejections;
    }
  }
  solve_records(spec, config, record.samples);
  record.counters.solves = record.samples.size();
  record.online_ms = elapsed_ms(start);
  return record;
}

RunRecord run_sqs_selection(const FieldSpec& spec, const SamplerConfig& config, const OfflineTables& tables) {
  config.validate();
  check_tables(config, spec, tables);
  RunRecord record;
  record.config = config;
  const LawMoments moments = law_moments(spec);
  auto start = Clock::now();
  if (!config.sqs1_exact) record.normalizers = pilot_normalizers(spec, config, tables, &record.counters.pilot_evaluations);
  record.offline_ms = elapsed_ms(start);
  start = Clock::now();

  std::vector<SQSScore> scores(static_cast<std::size_t>(config.calM));
  parallel_for(scores.size(), config.workers, [&](std::size_t m) {
    SQSScore s = partial_score(draw_environment(spec, config, config.base_seed + m), moments, &tables);
    s.combined = config.sqs1_exact ? s.err2 : combined_score(s.err1, s.err2, config.weight, record.normalizers);
    scores[m] = s;
  });
  record.counters.criterion_evaluations = scores.size();
  std::sort(scores.begin(), scores.end(), [](const SQSScore& a, const SQSScore& b) {
    return a.combined != b.combined ? a.combined < b.combined : a.seed < b.seed;
  });
  for (int m = 0; m < config.M; ++m) record.samples.push_back({scores[m].seed, scores[m], {}});
  record.rejections = scores.size() - record.samples.size();
  solve_records(spec, config, record.samples);
  record.counters.solves = record.samples.size();
  record.online_ms = elapsed_ms(start);
  return record;
}

RunRecord run_sampler(const FieldSpec& spec, const SamplerConfig& config, const OfflineTables* tables) {
  switch (config.mode) {
    case SamplerMode::classical:
      return run_classical(spec, config, tables);
    case SamplerMode::sqs_tolerance:
      if (!tables) throw SpecError("tolerance sampling needs offline tables");
      return run_sqs_tolerance(spec, config, *tables);
    case SamplerMode::sqs_selection:
      if (!tables) throw SpecError("selection sampling needs offline tables");
      return run_sqs_selection(spec, config, *tables);
  }
  throw SpecError("unknown sampler mode");
}

EstimatorReport estimate(const RunRecord& record) {
  std::vector<Matrix> tensors;
  tensors.reserve(record.samples.size());
  for (const auto& s : record.samples) tensors.push_back(s.sample.tensor);
  std::string label = to_string(record.config.mode);
  if (record.config.sqs1_exact) label += "_exact";
  return summarize(tensors, label);
}

}  // namespace sqs
