#include "amrlab/tensor_basis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace amrlab {

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::transpose() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

DenseMatrix DenseMatrix::operator*(const DenseMatrix& rhs) const {
  if (cols_ != rhs.rows_) throw std::invalid_argument("DenseMatrix: shape mismatch");
  DenseMatrix out(rows_, rhs.cols_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t k = 0; k < cols_; ++k) {
      const double a = (*this)(i, k);
      for (std::size_t j = 0; j < rhs.cols_; ++j) out(i, j) += a * rhs(k, j);
    }
  return out;
}

DenseMatrix DenseMatrix::operator*(double s) const {
  DenseMatrix out = *this;
  for (auto& v : out.data_) v *= s;
  return out;
}

DenseMatrix DenseMatrix::operator+(const DenseMatrix& rhs) const {
  if (rows_ != rhs.rows_ || cols_ != rhs.cols_)
    throw std::invalid_argument("DenseMatrix: shape mismatch");
  DenseMatrix out = *this;
  for (std::size_t k = 0; k < data_.size(); ++k) out.data_[k] += rhs.data_[k];
  return out;
}

void DenseMatrix::apply(std::span<const double> in, std::span<double> out) const {
  for (std::size_t i = 0; i < rows_; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols_; ++j) s += (*this)(i, j) * in[j];
    out[i] = s;
  }
}

std::vector<double> DenseMatrix::apply(std::span<const double> in) const {
  std::vector<double> out(rows_);
  apply(in, out);
  return out;
}

double DenseMatrix::max_abs_diff(const DenseMatrix& other) const {
  double m = 0.0;
  for (std::size_t k = 0; k < data_.size(); ++k)
    m = std::max(m, std::abs(data_[k] - other.data_[k]));
  return m;
}

DenseMatrix solve(const DenseMatrix& a, const DenseMatrix& b) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.rows() != n) throw std::invalid_argument("solve: shape mismatch");
  DenseMatrix lu = a;
  DenseMatrix x = b;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(lu(r, col)) > std::abs(lu(piv, col))) piv = r;
    if (std::abs(lu(piv, col)) < 1e-300) throw std::runtime_error("solve: singular matrix");
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu(piv, j), lu(col, j));
      for (std::size_t j = 0; j < x.cols(); ++j) std::swap(x(piv, j), x(col, j));
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = lu(r, col) / lu(col, col);
      if (f == 0.0) continue;
      for (std::size_t j = col; j < n; ++j) lu(r, j) -= f * lu(col, j);
      for (std::size_t j = 0; j < x.cols(); ++j) x(r, j) -= f * x(col, j);
    }
  }
  for (std::size_t ri = n; ri-- > 0;) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      double s = x(ri, j);
      for (std::size_t k = ri + 1; k < n; ++k) s -= lu(ri, k) * x(k, j);
      x(ri, j) = s / lu(ri, ri);
    }
  }
  return x;
}

double legendre(int n, double x, double* derivative) {
  if (n == 0) {
    if (derivative) *derivative = 0.0;
    return 1.0;
  }
  double p_prev = 1.0;
  double p = x;
  double dp_prev = 0.0;
  double dp = 1.0;
  for (int k = 2; k <= n; ++k) {
    const double p_next = ((2.0 * k - 1.0) * x * p - (k - 1.0) * p_prev) / k;
    const double dp_next = dp_prev + (2.0 * k - 1.0) * p;
    p_prev = p;
    p = p_next;
    dp_prev = dp;
    dp = dp_next;
  }
  if (derivative) *derivative = dp;
  return p;
}

NodalBasis lgl_nodes_and_weights(int order) {
  if (order < 1)
    throw std::invalid_argument("lgl_nodes_and_weights: order must be >= 1, got " +
                                std::to_string(order));
  const int n = order;
  std::vector<double> x(n + 1);
  // Chebyshev-Gauss-Lobatto seeds, then Newton on x P_N - P_{N-1} = 0 form.
  for (int j = 0; j <= n; ++j) x[j] = -std::cos(std::numbers::pi * j / n);
  for (int j = 1; j < n; ++j) {
    double xi = x[j];
    for (int it = 0; it < 100; ++it) {
      const double pn = legendre(n, xi);
      const double pnm1 = legendre(n - 1, xi);
      const double dx = (xi * pn - pnm1) / ((n + 1) * pn);
      xi -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    x[j] = xi;
  }
  x.front() = -1.0;
  x.back() = 1.0;
  // Enforce exact symmetry.
  for (int j = 0; j <= n / 2; ++j) {
    const double s = 0.5 * (x[n - j] - x[j]);
    x[j] = -s;
    x[n - j] = s;
  }
  if (n % 2 == 0) x[n / 2] = 0.0;

  NodalBasis basis;
  basis.order = n;
  basis.nodes = x;
  basis.weights.resize(n + 1);
  for (int j = 0; j <= n; ++j) {
    const double pn = legendre(n, x[j]);
    basis.weights[j] = 2.0 / (n * (n + 1.0) * pn * pn);
  }
  basis.mass_diag = basis.weights;
  basis.diff_matrix = differentiation_matrix(basis.nodes);
  return basis;
}

namespace {

std::vector<double> barycentric_weights(std::span<const double> nodes) {
  const std::size_t n = nodes.size();
  std::vector<double> w(n, 1.0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k)
      if (k != j) w[j] /= (nodes[j] - nodes[k]);
  return w;
}

}  // namespace

DenseMatrix differentiation_matrix(std::span<const double> nodes) {
  const std::size_t n = nodes.size();
  const auto w = barycentric_weights(nodes);
  DenseMatrix d(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double diag = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      d(i, j) = (w[j] / w[i]) / (nodes[i] - nodes[j]);
      diag -= d(i, j);
    }
    // Negative-sum trick: rows annihilate constants exactly.
    d(i, i) = diag;
  }
  return d;
}

DenseMatrix differentiation_matrix(const NodalBasis& basis) {
  return differentiation_matrix(basis.nodes);
}

std::vector<double> lagrange_values(std::span<const double> nodes, double x) {
  const std::size_t n = nodes.size();
  std::vector<double> values(n);
  for (std::size_t j = 0; j < n; ++j) {
    double v = 1.0;
    for (std::size_t k = 0; k < n; ++k)
      if (k != j) v *= (x - nodes[k]) / (nodes[j] - nodes[k]);
    values[j] = v;
  }
  return values;
}

DenseMatrix interpolation_matrix(std::span<const double> nodes,
                                 std::span<const double> points) {
  DenseMatrix m(points.size(), nodes.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto l = lagrange_values(nodes, points[i]);
    for (std::size_t j = 0; j < nodes.size(); ++j) m(i, j) = l[j];
  }
  return m;
}

DenseMatrix exact_mass_matrix(const NodalBasis& basis) {
  // Integrand degree 2N; an LGL rule of order 2N+2 is exact to degree 4N+1.
  const NodalBasis quad = lgl_nodes_and_weights(2 * basis.order + 2);
  const DenseMatrix l = interpolation_matrix(basis.nodes, quad.nodes);
  const std::size_t n = basis.nodes.size();
  DenseMatrix m(n, n);
  for (std::size_t q = 0; q < quad.nodes.size(); ++q)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) m(i, j) += quad.weights[q] * l(q, i) * l(q, j);
  return m;
}

ProjectionSet build_projection_set(const NodalBasis& basis) {
  const std::size_t n = basis.nodes.size();
  const NodalBasis quad = lgl_nodes_and_weights(2 * basis.order + 2);
  ProjectionSet set;
  set.order = basis.order;
  set.mass = exact_mass_matrix(basis);

  const DenseMatrix l_mortar = interpolation_matrix(basis.nodes, quad.nodes);
  for (int h = 0; h < 2; ++h) {
    std::vector<double> parent_pts(quad.nodes.size());
    for (std::size_t q = 0; q < quad.nodes.size(); ++q)
      parent_pts[q] = parent_coordinate(static_cast<Half>(h), quad.nodes[q]);
    const DenseMatrix l_parent = interpolation_matrix(basis.nodes, parent_pts);
    DenseMatrix s(n, n);
    for (std::size_t q = 0; q < quad.nodes.size(); ++q)
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < n; ++j)
          s(k, j) += quad.weights[q] * l_mortar(q, k) * l_parent(q, j);
    set.mixed_mass[h] = s;
    set.parent_to_child[h] = solve(set.mass, s);
    set.child_to_parent[h] = solve(set.mass, s.transpose()) * set.scale_factors[h];
  }
  return set;
}

}  // namespace amrlab
