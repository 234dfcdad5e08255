#pragma once

// Truncated corrector problems on Q_N and apparent homogenized tensors.

#include <utility>

#include "sqs/fe.hpp"
#include "sqs/lattice_field.hpp"

namespace sqs {

struct SolverOptions {
  double tol = 1e-10;
  /// 0 selects 50 * (cells per side).
  int max_iterations = 0;
};

/// Coefficient of one environment on the (N r)^d fine grid.
CoefficientGrid discretize(const FieldSpec& spec, const Environment& env, int r);

/// The part X_k C1 of the field (eta and C0 removed) on the fine grid.
CoefficientGrid discretize_fluctuation(const FieldSpec& spec, const Environment& env, int r);

/// Constant coefficient c on the (N r)^d fine grid.
CoefficientGrid constant_grid(const Matrix& c, int d, int N, int r);

struct CorrectorSolution {
  /// Index a of p = s e_a, or -1 when p is not axis aligned.
  int direction = -1;
  Vector p;
  Boundary bc = Boundary::periodic;
  /// Full node values; zero mean for periodic and neumann, zero on the boundary for dirichlet.
  Vector nodes;
  /// Cell-wise mean gradients, d x cells.
  Matrix gradients;
  double residual = 0.0;
  int iterations = 0;
};

CorrectorSolution solve_corrector(const CoefficientGrid& grid, const Vector& p, Boundary bc,
                                  const SolverOptions& options = {});

struct HomogenizedSample {
  Matrix tensor;
  /// |T - T^T| / |T| of the raw tensor before symmetrization.
  double asymmetry = 0.0;
  Boundary bc = Boundary::periodic;
  std::uint64_t seed = 0;
  int N = 0;
  int r = 0;
  double wall_ms = 0.0;
  int iterations = 0;
  double residual = 0.0;
};

/// Column p is the mean flux (periodic, dirichlet) or, for neumann, the
/// inverse of the mean-gradient matrix S. Throws SolverError if S is singular.
HomogenizedSample homogenized_tensor(const CoefficientGrid& grid, const std::vector<CorrectorSolution>& solutions,
                                     Boundary bc);

/// Solves all d canonical directions and assembles the tensor.
HomogenizedSample compute_homogenized(const CoefficientGrid& grid, Boundary bc, const SolverOptions& options = {});

/// Harmonic mean of the cell-wise smallest eigenvalues and arithmetic mean of
/// the largest ones.
std::pair<double, double> voigt_reuss_bounds(const CoefficientGrid& grid);

/// max_j |(K w - b)_j| / |b| over the unknowns of a solved corrector.
double flux_residual(const CoefficientGrid& grid, const CorrectorSolution& solution);

struct PerturbationHierarchy {
  Vector w0;
  Vector u1;
  Vector u2;
  Matrix A0;
  Matrix A1;
  Matrix A2;
  int iterations = 0;
};

/// Chained periodic solves for C0 constant: w0 = 0,
/// -div(C0 grad u1) = div(X C1 p), -div(C0 grad u2) = div(X C1 grad u1).
/// Node fields belong to direction p; tensors are assembled for all directions.
PerturbationHierarchy solve_perturbation_hierarchy(const CoefficientGrid& c0_grid, const CoefficientGrid& fluctuation,
                                                   const Vector& p, const SolverOptions& options = {});

}  // namespace sqs
