#include <numeric>

#include "doctest.h"
#include "sqs/analytic.hpp"
#include "sqs/corrector.hpp"
#include "support.hpp"

using namespace sqs;
using sqs::test::checkerboard;

namespace {

CoefficientGrid grid_1d(const std::vector<double>& values) {
  CoefficientGrid g(1, static_cast<std::int64_t>(values.size()), 1.0);
  for (std::size_t k = 0; k < values.size(); ++k) g.at(k)(0, 0) = values[k];
  return g;
}

// Stripes along x1 with the given values; each stripe is one unit cell wide.
CoefficientGrid laminate(const std::vector<double>& values, int r) {
  const int N = static_cast<int>(values.size());
  CoefficientGrid g(2, static_cast<std::int64_t>(N) * r, 1.0 / r);
  const BoxIndexer ix = g.cell_indexer();
  for (std::size_t c = 0; c < g.cell_count(); ++c) g.at(c) = values[ix.multi(c)[0] / r] * Matrix::Identity(2, 2);
  return g;
}

}  // namespace

TEST_SUITE("corrector") {
  TEST_CASE("reference element") {
    for (int d = 1; d <= 3; ++d) {
      const Q1Reference& ref = Q1Reference::get(d);
      const Matrix K = ref.element_matrix(Matrix::Identity(d, d), 0.5);
      CHECK(K.isApprox(K.transpose()));
      CHECK(K.rowwise().sum().cwiseAbs().maxCoeff() < 1e-14);
      for (int a = 0; a < d; ++a) {
        double s = 0.0;
        for (int j = 0; j < ref.nloc; ++j) s += ref.mean_gradient[a][j];
        CHECK(std::abs(s) < 1e-14);
      }
    }
  }

  TEST_CASE("discretization places cell values") {
    const FieldSpec spec = checkerboard(0.5, 1);
    const Environment env{DomainSpec{2, 1}, {1.0, -1.0}, 0};
    const CoefficientGrid g = discretize(spec, env, 2);
    REQUIRE(g.cell_count() == 4);
    const double expected[] = {1.5, 1.5, 0.5, 0.5};
    for (int c = 0; c < 4; ++c) CHECK(g.at(c)(0, 0) == doctest::Approx(expected[c]));
    const CoefficientGrid off = discretize(spec.with_eta(0.0), env, 2);
    for (int c = 0; c < 4; ++c) CHECK(off.at(c)(0, 0) == 1.0);
    const CoefficientGrid fl = discretize_fluctuation(spec, env, 1);
    CHECK(fl.at(0)(0, 0) == 1.0);
    CHECK(fl.at(1)(0, 0) == -1.0);
  }

  TEST_CASE("checkerboard grid is 0.5 or 1.5 per unit cell") {
    const FieldSpec spec = checkerboard();
    const Environment env = sample_environment(spec, DomainSpec{6, 2}, 4);
    const CoefficientGrid g = discretize(spec, env, 1);
    for (std::size_t c = 0; c < g.cell_count(); ++c)
      CHECK(g.at(c).isApprox((1.0 + 0.5 * env[c]) * Matrix::Identity(2, 2)));
  }

  TEST_CASE("constant coefficient is reproduced for every boundary") {
    Matrix c(2, 2);
    c << 2.0, 0.3, 0.3, 1.0;
    for (Boundary bc : {Boundary::periodic, Boundary::dirichlet, Boundary::neumann}) {
      const HomogenizedSample s = compute_homogenized(constant_grid(c, 2, 3, 2), bc);
      CHECK((s.tensor - c).norm() < 1e-10);
      // The neumann form carries the load (A - I) p and needs a genuine solve.
      if (bc != Boundary::neumann) CHECK(s.iterations == 0);
    }
  }

  TEST_CASE("two-cell periodic solve gives the harmonic mean") {
    const CoefficientGrid g = grid_1d({1.5, 0.5});
    const CorrectorSolution sol = solve_corrector(g, Vector::Ones(1), Boundary::periodic);
    CHECK(sol.gradients(0, 0) == doctest::Approx(-0.5));
    CHECK(sol.gradients(0, 1) == doctest::Approx(0.5));
    CHECK(compute_homogenized(g, Boundary::periodic).tensor(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
  }

  TEST_CASE("one-dimensional tensors equal the harmonic mean for every boundary") {
    const std::vector<double> values{0.5, 1.5, 1.5, 0.7, 2.0, 0.5, 1.1};
    const double h = harmonic_oracle(values);
    for (Boundary bc : {Boundary::periodic, Boundary::dirichlet, Boundary::neumann})
      CHECK(test::rel(compute_homogenized(grid_1d(values), bc).tensor(0, 0), h) < 1e-9);
  }

  TEST_CASE("laminates: harmonic across the layers, arithmetic along them") {
    const std::vector<double> values{0.5, 1.5, 1.5, 0.5, 0.5, 1.5};
    const double h = harmonic_oracle(values);
    const double a = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
    const HomogenizedSample s = compute_homogenized(laminate(values, 2), Boundary::periodic);
    CHECK(test::rel(s.tensor(0, 0), h) < 1e-9);
    CHECK(test::rel(s.tensor(1, 1), a) < 1e-9);
    CHECK(std::abs(s.tensor(0, 1)) < 1e-9);
  }

  TEST_CASE("solutions meet the tolerance and are gauge fixed") {
    const FieldSpec spec = checkerboard();
    const CoefficientGrid g = discretize(spec, sample_environment(spec, DomainSpec{6, 2}, 9), 2);
    for (int a = 0; a < 2; ++a) {
      const CorrectorSolution sol = solve_corrector(g, Vector::Unit(2, a), Boundary::periodic);
      CHECK(sol.direction == a);
      CHECK(sol.residual <= 1e-10);
      CHECK(std::abs(sol.nodes.mean()) < 1e-12);
      CHECK(flux_residual(g, sol) < 1e-8);
    }
  }

  TEST_CASE("tensor is symmetric and inside the Voigt-Reuss bounds") {
    const FieldSpec spec = checkerboard(0.7);
    for (std::uint64_t s = 0; s < 5; ++s) {
      const CoefficientGrid g = discretize(spec, sample_environment(spec, DomainSpec{5, 2}, s), 2);
      const auto [lo, hi] = voigt_reuss_bounds(g);
      for (Boundary bc : {Boundary::periodic, Boundary::dirichlet, Boundary::neumann}) {
        const HomogenizedSample hs = compute_homogenized(g, bc);
        CHECK(hs.tensor.isApprox(hs.tensor.transpose()));
        Eigen::SelfAdjointEigenSolver<Matrix> eig(hs.tensor);
        CHECK(eig.eigenvalues().minCoeff() >= lo - 1e-9);
        CHECK(eig.eigenvalues().maxCoeff() <= hi + 1e-9);
      }
    }
  }

  TEST_CASE("boundary ordering neumann <= periodic <= dirichlet") {
    const FieldSpec spec = checkerboard();
    for (std::uint64_t s = 0; s < 8; ++s) {
      const CoefficientGrid g = discretize(spec, sample_environment(spec, DomainSpec{5, 2}, 100 + s), 1);
      const Matrix neu = compute_homogenized(g, Boundary::neumann).tensor;
      const Matrix per = compute_homogenized(g, Boundary::periodic).tensor;
      const Matrix dir = compute_homogenized(g, Boundary::dirichlet).tensor;
      for (int a = 0; a < 2; ++a) {
        CHECK(neu(a, a) <= per(a, a) + 1e-9);
        CHECK(per(a, a) <= dir(a, a) + 1e-9);
      }
    }
  }

  TEST_CASE("periodic tensor is invariant under lattice translations") {
    const FieldSpec spec = checkerboard();
    const Environment env = sample_environment(spec, DomainSpec{5, 2}, 21);
    Environment shifted = env;
    const BoxIndexer ix = env.domain.indexer();
    for (std::size_t k = 0; k < ix.size(); ++k) {
      Index3 m = ix.multi(k);
      m[0] += 2;
      m[1] += 3;
      shifted.cells[ix.wrapped(m)] = env.cells[k];
    }
    const Matrix a = compute_homogenized(discretize(spec, env, 2), Boundary::periodic).tensor;
    const Matrix b = compute_homogenized(discretize(spec, shifted, 2), Boundary::periodic).tensor;
    CHECK((a - b).norm() < 1e-9);
  }

  TEST_CASE("perturbation hierarchy basics") {
    const FieldSpec spec = checkerboard();
    const Environment env = sample_environment(spec, DomainSpec{4, 2}, 5);
    const CoefficientGrid c0 = constant_grid(spec.c0(), 2, 4, 1);
    const PerturbationHierarchy ph =
        solve_perturbation_hierarchy(c0, discretize_fluctuation(spec, env, 1), Vector::Unit(2, 0));
    CHECK(ph.w0.cwiseAbs().maxCoeff() == 0.0);
    CHECK(ph.A0.isApprox(Matrix::Identity(2, 2)));
    CHECK((ph.A1 - env.mean() * Matrix::Identity(2, 2)).norm() < 1e-12);
    CHECK(ph.A2.isApprox(ph.A2.transpose(), 1e-8));
    CHECK(ph.A2(0, 0) <= 1e-12);
  }

  TEST_CASE("perturbation residual is third order") {
    const FieldSpec spec = checkerboard();
    const Environment env = sample_environment(spec, DomainSpec{4, 2}, 6);
    const PerturbationHierarchy ph = solve_perturbation_hierarchy(
        constant_grid(spec.c0(), 2, 4, 1), discretize_fluctuation(spec, env, 1), Vector::Unit(2, 0));
    double prev = 0.0;
    for (double eta : {0.2, 0.1}) {
      const Matrix a = compute_homogenized(discretize(spec.with_eta(eta), env, 1), Boundary::periodic,
                                           SolverOptions{1e-13, 0})
                           .tensor;
      const double res = (a - (ph.A0 + eta * ph.A1 + eta * eta * ph.A2)).norm();
      if (prev > 0.0) CHECK(std::log2(prev / res) == doctest::Approx(3.0).epsilon(0.1));
      prev = res;
    }
  }

  TEST_CASE("non-constant C0 is rejected by the hierarchy") {
    const FieldSpec spec = checkerboard();
    const Environment env = sample_environment(spec, DomainSpec{3, 2}, 1);
    CHECK_THROWS_AS(solve_perturbation_hierarchy(discretize(spec, env, 1), discretize_fluctuation(spec, env, 1),
                                                 Vector::Unit(2, 0)),
                    SpecError);
  }

  TEST_CASE("iteration cap raises a solver error") {
    const FieldSpec spec = checkerboard(0.9);
    const CoefficientGrid g = discretize(spec, sample_environment(spec, DomainSpec{8, 2}, 2), 2);
    CHECK_THROWS_AS(solve_corrector(g, Vector::Unit(2, 0), Boundary::periodic, SolverOptions{1e-12, 2}), SolverError);
  }
}
