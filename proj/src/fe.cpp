#include "sqs/fe.hpp"

#include <cmath>
#include <mutex>

#include "sqs/errors.hpp"

namespace sqs {

std::string to_string(Boundary bc) {
  switch (bc) {
    case Boundary::periodic:
      return "periodic";
    case Boundary::dirichlet:
      return "dirichlet";
    case Boundary::neumann:
      return "neumann";
  }
  return {};
}

Boundary parse_boundary(const std::string& text) {
  if (text == "periodic") return Boundary::periodic;
  if (text == "dirichlet") return Boundary::dirichlet;
  if (text == "neumann") return Boundary::neumann;
  throw SpecError("unknown boundary condition '" + text + "'");
}

// ---------------------------------------------------------- CoefficientGrid

CoefficientGrid::CoefficientGrid(int d, std::int64_t cells_per_side, double h)
    : d_(d), n_(cells_per_side), h_(h), cells_(BoxIndexer{d, cells_per_side}.size()), data_(cells_ * d * d, 0.0) {
  if (d < 1 || d > 3) throw SpecError("dimension must be 1, 2 or 3");
  if (cells_per_side < 1) throw SpecError("grid needs at least one cell per side");
  if (!(h > 0.0)) throw SpecError("cell width must be positive");
}

double CoefficientGrid::volume() const noexcept { return std::pow(static_cast<double>(n_) * h_, d_); }

double CoefficientGrid::lambda_min() const {
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < cells_; ++c) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(Matrix(at(c)), Eigen::EigenvaluesOnly);
    lo = std::min(lo, es.eigenvalues().minCoeff());
  }
  return lo;
}

double CoefficientGrid::lambda_max() const {
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < cells_; ++c) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(Matrix(at(c)), Eigen::EigenvaluesOnly);
    hi = std::max(hi, es.eigenvalues().maxCoeff());
  }
  return hi;
}

// -------------------------------------------------------------- Q1Reference

namespace {

Q1Reference build_reference(int d) {
  Q1Reference ref;
  ref.d = d;
  ref.nloc = 1 << d;
  const int nloc = ref.nloc;
  auto bit = [](int j, int a) { return (j >> a) & 1; };
  // 1D integrals on (0,1) with l0 = 1 - t, l1 = t.
  auto mass = [](int i, int j) { return i == j ? 1.0 / 3.0 : 1.0 / 6.0; };
  auto stiff = [](int i, int j) { return i == j ? 1.0 : -1.0; };
  auto mixed = [](int i, int /*j*/) { return i == 0 ? -0.5 : 0.5; };  // integral of l_i' l_j

  ref.stiffness.assign(static_cast<std::size_t>(d * d), Matrix::Zero(nloc, nloc));
  for (int a = 0; a < d; ++a) {
    for (int c = 0; c < d; ++c) {
      Matrix& m = ref.stiffness[static_cast<std::size_t>(a * d + c)];
      for (int j = 0; j < nloc; ++j) {
        for (int k = 0; k < nloc; ++k) {
          double v = 1.0;
          for (int b = 0; b < d; ++b) {
            if (a == c && b == a)
              v *= stiff(bit(j, b), bit(k, b));
            else if (b == a)
              v *= mixed(bit(j, b), bit(k, b));
            else if (b == c)
              v *= mixed(bit(k, b), bit(j, b));
            else
              v *= mass(bit(j, b), bit(k, b));
          }
          m(j, k) = v;
        }
      }
    }
  }
  ref.mean_gradient.assign(static_cast<std::size_t>(d), std::vector<double>(static_cast<std::size_t>(nloc)));
  const double weight = std::ldexp(1.0, -(d - 1));
  for (int a = 0; a < d; ++a)
    for (int j = 0; j < nloc; ++j) ref.mean_gradient[a][j] = (bit(j, a) ? 1.0 : -1.0) * weight;
  return ref;
}

}  // namespace

const Q1Reference& Q1Reference::get(int d) {
  static const Q1Reference refs[3] = {build_reference(1), build_reference(2), build_reference(3)};
  if (d < 1 || d > 3) throw SpecError("dimension must be 1, 2 or 3");
  return refs[d - 1];
}

Matrix Q1Reference::element_matrix(const Eigen::Ref<const Matrix>& B, double h) const {
  Matrix k = Matrix::Zero(nloc, nloc);
  for (int a = 0; a < d; ++a)
    for (int c = 0; c < d; ++c)
      if (B(a, c) != 0.0) k.noalias() += B(a, c) * stiffness[static_cast<std::size_t>(a * d + c)];
  return k * std::pow(h, d - 2);
}

// ------------------------------------------------------------------ Q1Space

Q1Space::Q1Space(int d, std::int64_t cells_per_side, double h, Boundary bc)
    : d_(d), n_(cells_per_side), h_(h), bc_(bc), node_index_{d, bc == Boundary::periodic ? cells_per_side : cells_per_side + 1} {
  if (d < 1 || d > 3) throw SpecError("dimension must be 1, 2 or 3");
  if (cells_per_side < 1) throw SpecError("space needs at least one cell per side");
  const std::size_t nodes = node_index_.size();
  dof_of_node_.assign(nodes, -1);
  for (std::size_t node = 0; node < nodes; ++node) {
    bool fixed = false;
    if (bc_ == Boundary::dirichlet) {
      const Index3 m = node_index_.multi(node);
      for (int a = 0; a < d_; ++a) fixed = fixed || m[a] == 0 || m[a] == n_;
    }
    if (!fixed) dof_of_node_[node] = static_cast<std::int64_t>(dofs_++);
  }
}

void Q1Space::cell_nodes(std::size_t cell, std::array<std::size_t, 8>& out) const noexcept {
  const Index3 base = BoxIndexer{d_, n_}.multi(cell);
  const int nloc = 1 << d_;
  for (int j = 0; j < nloc; ++j) {
    Index3 m = base;
    for (int a = 0; a < d_; ++a) m[a] += (j >> a) & 1;
    out[static_cast<std::size_t>(j)] = bc_ == Boundary::periodic ? node_index_.wrapped(m) : node_index_.linear(m);
  }
}

Vector Q1Space::restrict_to_dofs(const Vector& full) const {
  Vector out(static_cast<Eigen::Index>(dofs_));
  for (std::size_t node = 0; node < dof_of_node_.size(); ++node)
    if (dof_of_node_[node] >= 0) out[dof_of_node_[node]] = full[static_cast<Eigen::Index>(node)];
  return out;
}

Vector Q1Space::expand_from_dofs(const Vector& dofs) const {
  Vector out = Vector::Zero(static_cast<Eigen::Index>(dof_of_node_.size()));
  for (std::size_t node = 0; node < dof_of_node_.size(); ++node)
    if (dof_of_node_[node] >= 0) out[static_cast<Eigen::Index>(node)] = dofs[dof_of_node_[node]];
  return out;
}

// ---------------------------------------------------------------- assembly

FeSystem assemble(const Q1Space& space, const CoefficientGrid& A) {
  if (A.cell_count() != space.cell_count() || A.dimension() != space.dimension())
    throw SpecError("coefficient grid does not match the space");
  const auto& ref = Q1Reference::get(space.dimension());
  const int nloc = ref.nloc;
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(space.cell_count() * static_cast<std::size_t>(nloc * nloc));
  std::array<std::size_t, 8> nodes{};
  for (std::size_t cell = 0; cell < space.cell_count(); ++cell) {
    const Matrix ke = ref.element_matrix(A.at(cell), space.h());
    space.cell_nodes(cell, nodes);
    for (int j = 0; j < nloc; ++j) {
      const auto dj = space.dof_of_node(nodes[j]);
      if (dj < 0) continue;
      for (int k = 0; k < nloc; ++k) {
        const auto dk = space.dof_of_node(nodes[k]);
        if (dk < 0) continue;
        triplets.emplace_back(static_cast<int>(dj), static_cast<int>(dk), ke(j, k));
      }
    }
  }
  FeSystem sys;
  const auto n = static_cast<Eigen::Index>(space.dof_count());
  sys.K.resize(n, n);
  sys.K.setFromTriplets(triplets.begin(), triplets.end());
  sys.K.makeCompressed();
  sys.inverse_diagonal = Vector::Zero(n);
  const Vector diag = sys.K.diagonal();
  for (Eigen::Index i = 0; i < n; ++i) sys.inverse_diagonal[i] = diag[i] > 0.0 ? 1.0 / diag[i] : 0.0;
  return sys;
}

Vector load_from_cell_field(const Q1Space& space, const Matrix& G) {
  const int d = space.dimension();
  if (G.rows() != d || static_cast<std::size_t>(G.cols()) != space.cell_count())
    throw SpecError("cell field has the wrong shape");
  const auto& ref = Q1Reference::get(d);
  const double scale = std::pow(space.h(), d - 1);
  Vector b = Vector::Zero(static_cast<Eigen::Index>(space.node_count()));
  std::array<std::size_t, 8> nodes{};
  for (std::size_t cell = 0; cell < space.cell_count(); ++cell) {
    space.cell_nodes(cell, nodes);
    for (int j = 0; j < ref.nloc; ++j) {
      double v = 0.0;
      for (int a = 0; a < d; ++a) v += G(a, static_cast<Eigen::Index>(cell)) * ref.mean_gradient[a][j];
      b[static_cast<Eigen::Index>(nodes[j])] -= scale * v;
    }
  }
  return b;
}

Vector apply_element_operator(const Q1Space& space, const CoefficientGrid& B, const Vector& u) {
  const auto& ref = Q1Reference::get(space.dimension());
  Vector out = Vector::Zero(static_cast<Eigen::Index>(space.node_count()));
  std::array<std::size_t, 8> nodes{};
  Vector local(ref.nloc);
  for (std::size_t cell = 0; cell < space.cell_count(); ++cell) {
    space.cell_nodes(cell, nodes);
    for (int j = 0; j < ref.nloc; ++j) local[j] = u[static_cast<Eigen::Index>(nodes[j])];
    const Vector y = ref.element_matrix(B.at(cell), space.h()) * local;
    for (int j = 0; j < ref.nloc; ++j) out[static_cast<Eigen::Index>(nodes[j])] += y[j];
  }
  return out;
}

Matrix cell_mean_gradients(const Q1Space& space, const Vector& u) {
  const int d = space.dimension();
  const auto& ref = Q1Reference::get(d);
  Matrix g(d, static_cast<Eigen::Index>(space.cell_count()));
  std::array<std::size_t, 8> nodes{};
  for (std::size_t cell = 0; cell < space.cell_count(); ++cell) {
    space.cell_nodes(cell, nodes);
    for (int a = 0; a < d; ++a) {
      double v = 0.0;
      for (int j = 0; j < ref.nloc; ++j) v += ref.mean_gradient[a][j] * u[static_cast<Eigen::Index>(nodes[j])];
      g(a, static_cast<Eigen::Index>(cell)) = v / space.h();
    }
  }
  return g;
}

double energy_product(const Q1Space& space, const CoefficientGrid& B, const Vector& u, const Vector& v) {
  return v.dot(apply_element_operator(space, B, u));
}

// --------------------------------------------------------------------- PCG

namespace {

void remove_mean(Vector& v) {
  if (v.size() > 0) v.array() -= v.mean();
}

}  // namespace

PcgReport pcg_solve(const FeSystem& system, const Vector& b, Vector& x, double tol, int max_iterations,
                    bool project_mean, double zero_floor) {
  const Eigen::Index n = b.size();
  x = Vector::Zero(n);
  if (n == 0) return {};
  Vector rhs = b;
  if (project_mean) remove_mean(rhs);
  const double bnorm = rhs.norm();
  if (bnorm <= zero_floor) return {};

  Vector r = rhs;
  Vector z = system.inverse_diagonal.cwiseProduct(r);
  if (project_mean) remove_mean(z);
  Vector p = z;
  Vector Ap(n);
  double rz = r.dot(z);
  int it = 0;
  double rel = 1.0;
  while (it < max_iterations) {
    ++it;
    Ap.noalias() = system.K * p;
    const double pAp = p.dot(Ap);
    if (!(pAp > 0.0)) break;
    const double alpha = rz / pAp;
    x.noalias() += alpha * p;
    r.noalias() -= alpha * Ap;
    if (project_mean) remove_mean(r);
    rel = r.norm() / bnorm;
    if (rel <= tol) {
      // Confirm against the true residual; restart from it if the recurrence drifted.
      Vector true_r = rhs - system.K * x;
      if (project_mean) remove_mean(true_r);
      rel = true_r.norm() / bnorm;
      if (rel <= tol) break;
      r = true_r;
    }
    z = system.inverse_diagonal.cwiseProduct(r);
    if (project_mean) remove_mean(z);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  if (project_mean) remove_mean(x);
  if (!(rel <= tol))
    throw SolverError("conjugate gradients did not converge (relative residual " + std::to_string(rel) + " after " +
                          std::to_string(it) + " iterations)",
                      it, rel);
  return {it, rel};
}

}  // namespace sqs
