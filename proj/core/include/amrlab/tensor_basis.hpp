#pragma once

// Legendre-Gauss-Lobatto nodal machinery: nodes, weights, differentiation
// matrices and the 1D L2 projection operators used for mortars and
// parent/child solution transfer.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace amrlab {

/// Small dense row-major matrix. Sizes in this code base stay below ~20x20.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  const double* data() const { return data_.data(); }
  double* data() { return data_.data(); }

  DenseMatrix transpose() const;
  DenseMatrix operator*(const DenseMatrix& rhs) const;
  DenseMatrix operator*(double s) const;
  DenseMatrix operator+(const DenseMatrix& rhs) const;

  /// out = A * in
  void apply(std::span<const double> in, std::span<double> out) const;
  std::vector<double> apply(std::span<const double> in) const;

  double max_abs_diff(const DenseMatrix& other) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Solves A X = B with partial pivoting. Throws std::runtime_error when A is
/// numerically singular.
DenseMatrix solve(const DenseMatrix& a, const DenseMatrix& b);

/// Legendre polynomial L_n(x); optionally its derivative.
double legendre(int n, double x, double* derivative = nullptr);

struct NodalBasis {
  int order = 0;
  std::vector<double> nodes;
  std::vector<double> weights;
  DenseMatrix diff_matrix;
  // Diagonal of the collocated LGL mass matrix (equal to the weights).
  std::vector<double> mass_diag;

  int size() const { return order + 1; }
};

/// LGL nodes (roots of (1-x^2) L'_N) and weights for polynomial order N >= 1.
/// Throws std::invalid_argument for order < 1.
NodalBasis lgl_nodes_and_weights(int order);

/// D[i][j] = d l_j / dx at node i (barycentric form).
DenseMatrix differentiation_matrix(std::span<const double> nodes);
DenseMatrix differentiation_matrix(const NodalBasis& basis);

/// Lagrange cardinal values l_j(x) for the given nodes.
std::vector<double> lagrange_values(std::span<const double> nodes, double x);

/// M[i][j] = l_j(points[i]).
DenseMatrix interpolation_matrix(std::span<const double> nodes,
                                 std::span<const double> points);

/// Exact (non-collocated) mass matrix M[i][j] = int l_i l_j over [-1,1].
DenseMatrix exact_mass_matrix(const NodalBasis& basis);

/// Index of the two halves of [-1,1]: 0 = [-1,0], 1 = [0,1].
enum class Half : int { kLower = 0, kUpper = 1 };

/// Reference coordinate on the parent segment of mortar coordinate x.
inline double parent_coordinate(Half half, double x) {
  return half == Half::kLower ? 0.5 * (x - 1.0) : 0.5 * (x + 1.0);
}

struct ProjectionSet {
  int order = 0;
  // Parent segment nodal values -> half-segment (mortar / child) nodal values.
  std::array<DenseMatrix, 2> parent_to_child;
  // Half-segment nodal values -> parent segment, including the size factor.
  std::array<DenseMatrix, 2> child_to_parent;
  std::array<double, 2> scale_factors{0.5, 0.5};
  // Mixed mass matrices S_i[k][j] = int l_k(x) l_j(xi_i(x)) dx.
  std::array<DenseMatrix, 2> mixed_mass;
  DenseMatrix mass;
};

ProjectionSet build_projection_set(const NodalBasis& basis);

}  // namespace amrlab
