#include "sqs/corrector.hpp"

#include <chrono>
#include <cmath>

#include "sqs/errors.hpp"

namespace sqs {

namespace {

using Clock = std::chrono::steady_clock;

void check_resolution(const FieldSpec& spec, int r) {
  if (r < 1) throw SpecError("resolution must be at least 1");
  if (r % spec.c1().resolution() != 0)
    throw SpecError("resolution " + std::to_string(r) + " does not resolve the C1 table of resolution " +
                    std::to_string(spec.c1().resolution()));
}

template <class Fn>
CoefficientGrid fill_grid(int d, int N, int r, Fn&& value) {
  CoefficientGrid grid(d, static_cast<std::int64_t>(N) * r, 1.0 / r);
  const BoxIndexer fine = grid.cell_indexer();
  const BoxIndexer coarse{d, N};
  for (std::size_t cell = 0; cell < grid.cell_count(); ++cell) {
    const Index3 m = fine.multi(cell);
    Index3 unit{0, 0, 0};
    Index3 sub{0, 0, 0};
    for (int a = 0; a < d; ++a) {
      unit[a] = m[a] / r;
      sub[a] = m[a] % r;
    }
    grid.at(cell) = value(coarse.linear(unit), sub);
  }
  grid.N = N;
  grid.r = r;
  return grid;
}

int iteration_cap(const SolverOptions& options, std::int64_t cells_per_side) {
  if (options.max_iterations > 0) return options.max_iterations;
  return static_cast<int>(std::max<std::int64_t>(50 * cells_per_side, 50));
}

double load_floor(const Q1Space& space, const Matrix& G) {
  const double scale = std::pow(space.h(), space.dimension() - 1) * G.cwiseAbs().maxCoeff() *
                       std::sqrt(static_cast<double>(std::max<std::size_t>(space.dof_count(), 1)));
  return 1e-14 * std::max(scale, 1e-300);
}

/// Solves K(A) w = b on the unknowns for a full-node load and returns full-node values.
Vector solve_full(const Q1Space& space, const FeSystem& system, const Vector& full_load, double floor,
                  const SolverOptions& options, PcgReport& report) {
  const bool project = space.boundary() != Boundary::dirichlet;
  Vector x;
  report = pcg_solve(system, space.restrict_to_dofs(full_load), x, options.tol,
                     iteration_cap(options, space.cells_per_side()), project, floor);
  return space.expand_from_dofs(x);
}

Matrix cell_flux_load(const CoefficientGrid& grid, const Vector& p, bool subtract_identity) {
  const int d = grid.dimension();
  Matrix G(d, static_cast<Eigen::Index>(grid.cell_count()));
  for (std::size_t cell = 0; cell < grid.cell_count(); ++cell) {
    Vector g = grid.at(cell) * p;
    if (subtract_identity) g -= p;
    G.col(static_cast<Eigen::Index>(cell)) = g;
  }
  return G;
}

int direction_of(const Vector& p) {
  int dir = -1;
  for (Eigen::Index a = 0; a < p.size(); ++a) {
    if (p[a] == 0.0) continue;
    if (dir >= 0) return -1;
    dir = static_cast<int>(a);
  }
  return dir;
}

}  // namespace

CoefficientGrid discretize(const FieldSpec& spec, const Environment& env, int r) {
  check_resolution(spec, r);
  if (env.domain.d != spec.dimension()) throw SpecError("environment dimension does not match the field");
  return fill_grid(spec.dimension(), env.domain.N, r,
                   [&](std::size_t unit, const Index3& sub) { return spec.coefficient(env.cells[unit], r, sub); });
}

CoefficientGrid discretize_fluctuation(const FieldSpec& spec, const Environment& env, int r) {
  check_resolution(spec, r);
  if (env.domain.d != spec.dimension()) throw SpecError("environment dimension does not match the field");
  return fill_grid(spec.dimension(), env.domain.N, r,
                   [&](std::size_t unit, const Index3& sub) { return Matrix(env.cells[unit] * spec.c1().at(r, sub)); });
}

CoefficientGrid constant_grid(const Matrix& c, int d, int N, int r) {
  if (c.rows() != d || c.cols() != d) throw SpecError("constant coefficient has the wrong shape");
  return fill_grid(d, N, r, [&](std::size_t, const Index3&) { return c; });
}

CorrectorSolution solve_corrector(const CoefficientGrid& grid, const Vector& p, Boundary bc,
                                  const SolverOptions& options) {
  const int d = grid.dimension();
  if (p.size() != d) throw SpecError("direction has the wrong dimension");
  if (!(options.tol > 0.0 && options.tol < 1.0)) throw SpecError("solver tolerance must lie in (0, 1)");
  const Q1Space space(d, grid.cells_per_side(), grid.h(), bc);
  const FeSystem system = assemble(space, grid);
  const Matrix G = cell_flux_load(grid, p, bc == Boundary::neumann);

  CorrectorSolution sol;
  sol.direction = direction_of(p);
  sol.p = p;
  sol.bc = bc;
  PcgReport report;
  sol.nodes = solve_full(space, system, load_from_cell_field(space, G), load_floor(space, G), options, report);
  if (bc != Boundary::dirichlet && sol.nodes.size() > 0) sol.nodes.array() -= sol.nodes.mean();
  sol.gradients = cell_mean_gradients(space, sol.nodes);
  sol.residual = report.relative_residual;
  sol.iterations = report.iterations;
  return sol;
}

HomogenizedSample homogenized_tensor(const CoefficientGrid& grid, const std::vector<CorrectorSolution>& solutions,
                                     Boundary bc) {
  const int d = grid.dimension();
  if (static_cast<int>(solutions.size()) != d) throw SpecError("need one corrector per direction");
  Matrix P(d, d);
  Matrix T = Matrix::Zero(d, d);
  HomogenizedSample out;
  const double cell_volume = std::pow(grid.h(), d);
  for (int q = 0; q < d; ++q) {
    const auto& sol = solutions[q];
    if (sol.bc != bc) throw SpecError("corrector boundary conditions are inconsistent");
    P.col(q) = sol.p;
    Vector col = Vector::Zero(d);
    for (std::size_t cell = 0; cell < grid.cell_count(); ++cell) {
      const Vector grad = sol.p + sol.gradients.col(static_cast<Eigen::Index>(cell));
      col += bc == Boundary::neumann ? grad : Vector(grid.at(cell) * grad);
    }
    T.col(q) = col * (cell_volume / grid.volume());
    out.iterations += sol.iterations;
    out.residual = std::max(out.residual, sol.residual);
  }
  if (bc == Boundary::neumann) {
    // T holds S P; the tensor maps mean gradients back to mean fluxes P.
    Eigen::FullPivLU<Matrix> lu(T);
    if (!lu.isInvertible()) throw SolverError("neumann mean-gradient matrix is singular", out.iterations, 0.0);
    T = P * lu.inverse();
  } else {
    T = T * P.inverse();
  }
  const double norm = T.norm();
  out.asymmetry = norm > 0.0 ? (T - T.transpose()).norm() / norm : 0.0;
  out.tensor = 0.5 * (T + T.transpose());
  out.bc = bc;
  out.seed = grid.seed;
  out.N = grid.N;
  out.r = grid.r;
  return out;
}

HomogenizedSample compute_homogenized(const CoefficientGrid& grid, Boundary bc, const SolverOptions& options) {
  const auto start = Clock::now();
  const int d = grid.dimension();
  std::vector<CorrectorSolution> sols;
  sols.reserve(static_cast<std::size_t>(d));
  for (int a = 0; a < d; ++a) sols.push_back(solve_corrector(grid, Vector::Unit(d, a), bc, options));
  HomogenizedSample out = homogenized_tensor(grid, sols, bc);
  out.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  return out;
}

std::pair<double, double> voigt_reuss_bounds(const CoefficientGrid& grid) {
  double inv_sum = 0.0;
  double sum = 0.0;
  for (std::size_t cell = 0; cell < grid.cell_count(); ++cell) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(Matrix(grid.at(cell)), Eigen::EigenvaluesOnly);
    inv_sum += 1.0 / es.eigenvalues().minCoeff();
    sum += es.eigenvalues().maxCoeff();
  }
  const auto n = static_cast<double>(grid.cell_count());
  return {n / inv_sum, sum / n};
}

double flux_residual(const CoefficientGrid& grid, const CorrectorSolution& solution) {
  const Q1Space space(grid.dimension(), grid.cells_per_side(), grid.h(), solution.bc);
  const Matrix G = cell_flux_load(grid, solution.p, solution.bc == Boundary::neumann);
  Vector b = load_from_cell_field(space, G);
  Vector r = apply_element_operator(space, grid, solution.nodes) - b;
  b = space.restrict_to_dofs(b);
  r = space.restrict_to_dofs(r);
  if (solution.bc != Boundary::dirichlet) {
    b.array() -= b.mean();
    r.array() -= r.mean();
  }
  const double bn = b.norm();
  if (bn <= load_floor(space, G)) return r.lpNorm<Eigen::Infinity>();
  return r.lpNorm<Eigen::Infinity>() / bn;
}

PerturbationHierarchy solve_perturbation_hierarchy(const CoefficientGrid& c0_grid, const CoefficientGrid& fluctuation,
                                                   const Vector& p, const SolverOptions& options) {
  const int d = c0_grid.dimension();
  if (p.size() != d) throw SpecError("direction has the wrong dimension");
  if (fluctuation.dimension() != d || fluctuation.cell_count() != c0_grid.cell_count())
    throw SpecError("fluctuation grid does not match the C0 grid");
  const Matrix C0 = c0_grid.at(0);
  for (std::size_t cell = 1; cell < c0_grid.cell_count(); ++cell)
    if (!(c0_grid.at(cell) - C0).isZero(0.0)) throw SpecError("perturbation hierarchy requires a constant C0");

  const Q1Space space(d, c0_grid.cells_per_side(), c0_grid.h(), Boundary::periodic);
  const FeSystem system = assemble(space, c0_grid);
  const double vol = c0_grid.volume();
  const double cell_volume = std::pow(c0_grid.h(), d);

  PerturbationHierarchy out;
  out.w0 = Vector::Zero(static_cast<Eigen::Index>(space.node_count()));
  out.A0 = C0;
  out.A1 = Matrix::Zero(d, d);
  out.A2 = Matrix::Zero(d, d);
  out.u1 = out.w0;
  out.u2 = out.w0;
  double fluct_scale = 0.0;
  for (std::size_t cell = 0; cell < fluctuation.cell_count(); ++cell)
    fluct_scale = std::max(fluct_scale, fluctuation.at(cell).cwiseAbs().maxCoeff());

  for (int q = 0; q < d; ++q) {
    const Vector pq = Vector::Unit(d, q);
    const Matrix G1 = cell_flux_load(fluctuation, pq, false);
    PcgReport rep;
    Vector u1 = solve_full(space, system, load_from_cell_field(space, G1), load_floor(space, G1), options, rep);
    out.iterations += rep.iterations;
    const Vector load2 = -apply_element_operator(space, fluctuation, u1);
    const double floor2 = 1e-14 * std::pow(2.0, d) * std::pow(c0_grid.h(), d - 2) * fluct_scale * u1.norm();
    Vector u2 = solve_full(space, system, load2, floor2, options, rep);
    out.iterations += rep.iterations;

    const Matrix g1 = cell_mean_gradients(space, u1);
    for (std::size_t cell = 0; cell < fluctuation.cell_count(); ++cell) {
      out.A1.col(q) += fluctuation.at(cell) * pq;
      out.A2.col(q) += fluctuation.at(cell) * g1.col(static_cast<Eigen::Index>(cell));
    }
    out.u1 += p[q] * u1;
    out.u2 += p[q] * u2;
  }
  out.A1 *= cell_volume / vol;
  out.A2 *= cell_volume / vol;
  return out;
}

}  // namespace sqs
