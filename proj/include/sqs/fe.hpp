#pragma once

// Lowest-order conforming (Q1) finite elements on structured boxes of n^d
// cells of width h, with coefficients constant per cell.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sqs/lattice.hpp"

namespace sqs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class Boundary { periodic, dirichlet, neumann };

std::string to_string(Boundary bc);
Boundary parse_boundary(const std::string& text);

/// Cell-wise d x d coefficient on a box of n^d cells of width h.
/// Cells are stored in row-major order (first coordinate slowest).
class CoefficientGrid {
 public:
  CoefficientGrid(int d, std::int64_t cells_per_side, double h);

  int dimension() const noexcept { return d_; }
  std::int64_t cells_per_side() const noexcept { return n_; }
  double h() const noexcept { return h_; }
  std::size_t cell_count() const noexcept { return cells_; }
  BoxIndexer cell_indexer() const noexcept { return BoxIndexer{d_, n_}; }

  Eigen::Map<const Matrix> at(std::size_t cell) const {
    return Eigen::Map<const Matrix>(data_.data() + cell * d_ * d_, d_, d_);
  }
  Eigen::Map<Matrix> at(std::size_t cell) { return Eigen::Map<Matrix>(data_.data() + cell * d_ * d_, d_, d_); }

  /// Box volume (n h)^d.
  double volume() const noexcept;

  /// Smallest / largest eigenvalue over all cells.
  double lambda_min() const;
  double lambda_max() const;

  // Provenance; left at defaults for auxiliary grids.
  std::string spec_hash;
  std::uint64_t seed = 0;
  int N = 0;
  int r = 0;

 private:
  int d_;
  std::int64_t n_;
  double h_;
  std::size_t cells_;
  std::vector<double> data_;
};

/// Reference Q1 element on (0,1)^d. Local node j has coordinates given by the
/// bits of j (bit a set => coordinate a is 1).
struct Q1Reference {
  int d = 1;
  int nloc = 2;
  /// stiffness[a * d + c](j, k) = integral of d_a psi_j * d_c psi_k over the unit element.
  std::vector<Matrix> stiffness;
  /// mean_gradient[a][j] = mean over the unit element of d_a psi_j.
  std::vector<std::vector<double>> mean_gradient;

  static const Q1Reference& get(int d);

  /// Element matrix of integral grad(psi_j)^T B grad(psi_k) on a cell of width h.
  Matrix element_matrix(const Eigen::Ref<const Matrix>& B, double h) const;
};

/// Nodal Q1 space on a box with a boundary treatment. Full node arrays have
/// n^d entries (periodic, wrapped) or (n+1)^d entries (dirichlet, neumann);
/// dirichlet boundary nodes carry no unknown.
class Q1Space {
 public:
  Q1Space(int d, std::int64_t cells_per_side, double h, Boundary bc);

  int dimension() const noexcept { return d_; }
  std::int64_t cells_per_side() const noexcept { return n_; }
  double h() const noexcept { return h_; }
  Boundary boundary() const noexcept { return bc_; }
  std::size_t cell_count() const noexcept { return BoxIndexer{d_, n_}.size(); }
  std::size_t node_count() const noexcept { return node_index_.size(); }
  std::size_t dof_count() const noexcept { return dofs_; }
  const BoxIndexer& node_indexer() const noexcept { return node_index_; }

  /// Unknown index of a node, or -1 for a constrained node.
  std::int64_t dof_of_node(std::size_t node) const noexcept { return dof_of_node_[node]; }

  /// Full-node indices of the 2^d vertices of a cell, in local order.
  void cell_nodes(std::size_t cell, std::array<std::size_t, 8>& out) const noexcept;

  Vector restrict_to_dofs(const Vector& full) const;
  Vector expand_from_dofs(const Vector& dofs) const;

 private:
  int d_;
  std::int64_t n_;
  double h_;
  Boundary bc_;
  BoxIndexer node_index_;
  std::vector<std::int64_t> dof_of_node_;
  std::size_t dofs_ = 0;
};

/// Assembled stiffness operator for a coefficient on a space.
struct FeSystem {
  SparseMatrix K;
  Vector inverse_diagonal;
};

FeSystem assemble(const Q1Space& space, const CoefficientGrid& A);

/// Full-node load vector b_j = - sum_cells integral G_cell . grad psi_j for a
/// cell-wise constant vector field G (d x cells).
Vector load_from_cell_field(const Q1Space& space, const Matrix& G);

/// Full-node result of the element operator K(B) applied to full-node values u.
Vector apply_element_operator(const Q1Space& space, const CoefficientGrid& B, const Vector& u);

/// Cell-wise mean gradients (d x cells) of full-node values u.
Matrix cell_mean_gradients(const Q1Space& space, const Vector& u);

/// Integral of grad(u)^T B grad(v) over the box.
double energy_product(const Q1Space& space, const CoefficientGrid& B, const Vector& u, const Vector& v);

struct PcgReport {
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Jacobi-preconditioned conjugate gradients for K x = b. With
/// `project_mean`, the constant null space is removed from b, from every
/// residual and from every preconditioned residual, and x is returned with
/// zero mean. A right-hand side with norm <= zero_floor is treated as 0.
/// Throws SolverError when max_iterations is reached first.
PcgReport pcg_solve(const FeSystem& system, const Vector& b, Vector& x, double tol, int max_iterations,
                    bool project_mean, double zero_floor);

}  // namespace sqs
