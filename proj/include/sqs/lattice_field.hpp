#pragma once

// Random lattice coefficient fields A(x) = C0 + eta * X_k * C1({x}) where X_k is
// the value of the unit cell containing x and C1 is Z^d-periodic.

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sqs/lattice.hpp"

namespace sqs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class LawKind { bernoulli, uniform, truncated_gaussian };

/// Law of a single cell variable X_k, supported in [-1, 1].
///  - bernoulli: X = +1 with probability q, -1 otherwise.
///  - uniform: uniform on [-1, 1].
///  - truncated_gaussian: N(0, sigma^2) conditioned on [-1, 1].
struct CellLaw {
  LawKind kind = LawKind::bernoulli;
  double q = 0.5;
  double sigma = 0.5;

  static CellLaw bernoulli(double q);
  static CellLaw uniform();
  static CellLaw truncated_gaussian(double sigma);

  /// Inverse-CDF map from u in (0,1) to a draw of X.
  double from_uniform(double u) const;

  /// Canonical text form, e.g. "bernoulli:0.5", "uniform", "truncated_gaussian:0.5".
  std::string to_string() const;
  static CellLaw parse(const std::string& text);
};

/// Z^d-periodic unit-cell coefficient: a table of `resolution`^d symmetric
/// d x d matrices over the sub-cells of Q = (0,1)^d (resolution 1 = constant).
class UnitCellCoefficient {
 public:
  explicit UnitCellCoefficient(Matrix constant);
  UnitCellCoefficient(int resolution, std::vector<Matrix> table);

  int resolution() const noexcept { return resolution_; }
  int dimension() const noexcept { return static_cast<int>(table_.front().rows()); }
  bool is_constant() const noexcept { return resolution_ == 1; }
  const std::vector<Matrix>& table() const noexcept { return table_; }

  /// Value on the sub-cell of a resolution-`r` grid with in-cell offset `sub` (each entry in [0, r)).
  /// `r` must be a multiple of resolution().
  const Matrix& at(int r, const Index3& sub) const;

 private:
  int resolution_;
  std::vector<Matrix> table_;
};

/// Deterministic part of the random field plus the cell law. Validated at
/// construction: C0 + c * eta * C1(y) must be symmetric positive definite for
/// every c in [-1, 1] and every sub-cell y.
class FieldSpec {
 public:
  FieldSpec(int dimension, double eta, Matrix c0, UnitCellCoefficient c1, CellLaw law);

  int dimension() const noexcept { return d_; }
  double eta() const noexcept { return eta_; }
  const Matrix& c0() const noexcept { return c0_; }
  const UnitCellCoefficient& c1() const noexcept { return c1_; }
  const CellLaw& law() const noexcept { return law_; }

  /// Uniform eigenvalue bounds of the coefficient over all admissible cell values.
  double lambda_min() const noexcept { return lambda_min_; }
  double lambda_max() const noexcept { return lambda_max_; }

  /// C0 + eta * x * C1 evaluated on the given sub-cell.
  Matrix coefficient(double x, int r, const Index3& sub) const;

  /// Same field with a different eta (re-validated).
  FieldSpec with_eta(double eta) const;

  /// Canonical text used to build content hashes.
  std::string fingerprint() const;

 private:
  int d_;
  double eta_;
  Matrix c0_;
  UnitCellCoefficient c1_;
  CellLaw law_;
  double lambda_min_ = 0.0;
  double lambda_max_ = 0.0;
};

/// Q_N = (0, N)^d measured in unit cells.
struct DomainSpec {
  int N = 1;
  int d = 1;

  std::size_t cell_count() const noexcept { return indexer().size(); }
  BoxIndexer indexer() const noexcept { return BoxIndexer{d, N}; }
  void validate() const;
  bool operator==(const DomainSpec&) const = default;
};

/// One realization of the cell variables on Q_N, in row-major cell order.
struct Environment {
  DomainSpec domain;
  std::vector<double> cells;
  std::uint64_t seed = 0;

  double operator[](std::size_t k) const noexcept { return cells[k]; }
  double mean() const noexcept;
  bool operator==(const Environment&) const = default;
};

struct LawMoments {
  double mean = 0.0;
  double variance = 0.0;
  /// Cov(X_0, X_k) keyed by the lattice offset k; for i.i.d. laws only k = 0 is present.
  std::map<Index3, double> covariance_series;
  double total_covariance = 0.0;
};

Environment sample_environment(const FieldSpec& spec, const DomainSpec& domain, std::uint64_t seed);

/// Bernoulli environments whose +1 count is fixed (|Q_N|/2 for q = 1/2, else
/// round(|Q_N| q)); the +1 cells form a uniformly random subset.
Environment sample_environment_sqs1_exact(const FieldSpec& spec, const DomainSpec& domain, std::uint64_t seed);

/// A(x) for a point x in the closure of Q_N. The sub-cell is located at the
/// resolution of the C1 table.
Matrix coefficient_at(const FieldSpec& spec, const Environment& env, std::span<const double> x);

LawMoments law_moments(const CellLaw& law);
inline LawMoments law_moments(const FieldSpec& spec) { return law_moments(spec.law()); }

/// Text serialization: header lines (d, N, law, eta, seed) then one cell per
/// line in canonical order. Values round-trip bit-exactly.
void write_environment(std::ostream& out, const FieldSpec& spec, const Environment& env);

struct EnvironmentFile {
  Environment env;
  std::string law;
  double eta = 0.0;
};
EnvironmentFile read_environment(std::istream& in);

}  // namespace sqs
