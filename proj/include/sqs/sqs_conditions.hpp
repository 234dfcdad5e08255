#pragma once

// Offline coefficient tables and the first- and second-order SQS criteria.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sqs/corrector.hpp"
#include "sqs/lattice_field.hpp"

namespace sqs {

struct OfflineParams {
  int N = 1;
  int r = 1;
  /// Truncation radius of the phi_1 box in unit cells; 0 selects max(2N, 16).
  int R = 0;
  /// Shell cut-off for the I_k^inf table; 0 selects the smallest K passing the decay check.
  int K = 0;
  double decay_threshold = 0.05;
  double tol = 1e-10;

  int effective_R() const noexcept { return R > 0 ? R : std::max(2 * N, 16); }
};

/// All matrices are d x d with column p holding the vector for direction e_p.
struct OfflineTables {
  std::string spec_fingerprint;
  std::string hash;
  int d = 1;
  int N = 1;
  int r = 1;
  int R = 1;
  int K = 0;
  double decay_threshold = 0.05;
  double mean = 0.0;

  /// Per direction: unit-cell periodic node values (r^d nodes).
  std::vector<Vector> u1bar;
  /// Per direction: Q_N periodic node values ((N r)^d nodes).
  std::vector<Vector> phi1N;
  /// Per direction: cell mean gradients of phi_1 on the truncated box. Not serialized.
  std::vector<Matrix> phi1_gradients;

  std::map<Index3, Matrix> Ik_inf;
  /// Max over the shell |k|_inf = K of |I_k^inf| divided by the max over all k, for K = 0 .. R-1.
  std::vector<double> shell_ratio;
  /// I_{k,j}^N stored by the offset m = (j - k) mod N in row-major order.
  std::vector<Matrix> IkjN;
  /// Integral over Q of C1 grad u1bar.
  Matrix u1bar_integral;
  /// Per k in Q_N (row-major).
  std::vector<Matrix> IkN;
  std::vector<Matrix> Ibar_kN;
  Matrix rhs2;

  /// PDE solves spent building the tables.
  int solves = 0;

  const Matrix& IkjN_at(const Index3& k, const Index3& j) const;
};

/// Cache key of the tables for a field and offline parameters.
std::string offline_hash(const FieldSpec& spec, const OfflineParams& params);

/// Requires C0 constant, R >= N and K <= R - 1. Throws SpecError when the
/// decay check fails at the requested K.
OfflineTables build_offline_tables(const FieldSpec& spec, const OfflineParams& params);

std::string tables_to_json(const OfflineTables& tables);
OfflineTables tables_from_json(const std::string& text);

/// Loads the tables from `cache_dir/<hash>.json` when present, otherwise
/// builds and stores them. `built` reports whether a build happened.
OfflineTables load_or_build_tables(const FieldSpec& spec, const OfflineParams& params,
                                   const std::filesystem::path& cache_dir, bool* built = nullptr);

struct ScoreNormalizers {
  double sigma1 = 1.0;
  double sigma2 = 1.0;
};

struct SQSScore {
  double err1 = 0.0;
  double err2 = 0.0;
  double combined = 0.0;
  std::uint64_t seed = 0;
};

double sqs1_error(const Environment& env, const LawMoments& moments);

/// Left-hand side of the second-order condition (d x d), evaluated through
/// the periodic autocorrelation of the centered cell values. With
/// `use_bar_tables` the u1bar contribution to I_k^N is dropped.
Matrix sqs2_lhs(const Environment& env, const OfflineTables& tables, const LawMoments& moments,
                bool use_bar_tables = false);

/// Frobenius norm of lhs - rhs. The bar tables are used automatically when
/// the environment is exactly balanced.
double sqs2_error(const Environment& env, const OfflineTables& tables, const LawMoments& moments);

/// Relative L2 discrepancy between grad u_1^N from a direct solve and its
/// superposition E[X0] grad u1bar + sum_k Xbar_k grad phi_1^N(. - k).
double superposition_check(const FieldSpec& spec, const Environment& env, const OfflineTables& tables,
                           const Vector& p, double tol);

/// weight * err1 / sigma1 + (1 - weight) * err2 / sigma2; a zero normalizer
/// falls back to the unnormalized weighted sum.
double combined_score(double err1, double err2, double weight, const ScoreNormalizers& normalizers);

SQSScore score_environment(const Environment& env, const OfflineTables& tables, const LawMoments& moments,
                           double weight, const ScoreNormalizers& normalizers);

}  // namespace sqs
