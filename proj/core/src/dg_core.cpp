#include "amrlab/dg_core.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

#include "amrlab/errors.hpp"

namespace amrlab {

MetricTerms compute_metrics(std::span<const Vec3> points, const NodalBasis& basis) {
  const int np = basis.size();
  const std::size_t nn = std::size_t(np) * np;
  if (points.size() != nn) throw std::invalid_argument("compute_metrics: need (N+1)^2 points");
  const DenseMatrix& d = basis.diff_matrix;
  bool curved = false;
  for (const Vec3& p : points) curved = curved || p.z != 0.0;

  MetricTerms m;
  m.jac.resize(nn);
  m.ja_xi.resize(nn);
  m.ja_eta.resize(nn);
  for (int j = 0; j < np; ++j)
    for (int i = 0; i < np; ++i) {
      Vec3 a1, a2;
      for (int k = 0; k < np; ++k) {
        a1 += points[k + np * j] * d(i, k);
        a2 += points[i + np * k] * d(j, k);
      }
      const int n = i + np * j;
      if (!curved) {
        const double jac = a1.x * a2.y - a2.x * a1.y;
        if (!(jac > 0.0))
          throw NumericalError("compute_metrics: non-positive Jacobian (inverted element)");
        m.jac[n] = jac;
        m.ja_xi[n] = {a2.y, -a2.x, 0.0};
        m.ja_eta[n] = {-a1.y, a1.x, 0.0};
      } else {
        const Vec3 nrm = cross(a1, a2);
        const double jac = norm(nrm);
        if (!(jac > 0.0) || !(dot(nrm, points[n]) > 0.0))
          throw NumericalError("compute_metrics: non-positive Jacobian (inverted element)");
        const auto pinv = pseudo_inverse_jacobian(a1, a2);
        m.jac[n] = jac;
        m.ja_xi[n] = pinv[0] * jac;
        m.ja_eta[n] = pinv[1] * jac;
      }
    }
  for (int s = 0; s < 4; ++s) {
    m.normal[s].resize(np);
    m.surface_jac[s].resize(np);
    for (int k = 0; k < np; ++k) {
      const int n = face_node(np, s, k);
      Vec3 v = side_axis(s) == 0 ? m.ja_xi[n] : m.ja_eta[n];
      if (s == kWest || s == kSouth) v = v * -1.0;
      const double ds = norm(v);
      m.surface_jac[s][k] = ds;
      m.normal[s][k] = v * (1.0 / ds);
    }
  }
  return m;
}

std::vector<Vec3> element_points(const ForestTopology& topo, const TileMapping& map,
                                 const CellKey& key, const NodalBasis& basis) {
  const int np = basis.size();
  const ParamBounds b = cell_param_bounds(topo, key);
  std::vector<Vec3> pts(std::size_t(np) * np);
  for (int j = 0; j < np; ++j)
    for (int i = 0; i < np; ++i) {
      const double s = b.s0 + 0.5 * (basis.nodes[i] + 1.0) * (b.s1 - b.s0);
      const double t = b.t0 + 0.5 * (basis.nodes[j] + 1.0) * (b.t1 - b.t0);
      pts[i + np * j] = map.point(key.tile, s, t);
    }
  return pts;
}

DGMesh build_dg_mesh(const QuadForest& forest, const TileMapping& map, const NodalBasis& basis) {
  DGMesh mesh;
  mesh.order = basis.order;
  mesh.np = basis.size();
  mesh.nelem = forest.num_leaves();
  mesh.curved = map.spherical();
  mesh.keys = forest.leaves();
  mesh.faces = forest.faces();
  const std::size_t nn = mesh.nodes_per_element();
  const std::size_t total = nn * mesh.nelem;
  mesh.points.resize(total);
  mesh.jac.resize(total);
  mesh.inv_jac.resize(total);
  mesh.quad_weight.resize(total);
  mesh.ja_xi.resize(total);
  mesh.ja_eta.resize(total);
  mesh.element_area.resize(mesh.nelem);
  mesh.min_edge.resize(mesh.nelem);
  const int np = mesh.np;
  for (std::size_t e = 0; e < mesh.nelem; ++e) {
    const CellKey& key = mesh.keys[e];
    const auto pts = element_points(forest.topology(), map, key, basis);
    const MetricTerms m = compute_metrics(pts, basis);
    for (std::size_t n = 0; n < nn; ++n) {
      const std::size_t g = e * nn + n;
      mesh.points[g] = pts[n];
      mesh.jac[g] = m.jac[n];
      mesh.inv_jac[g] = 1.0 / m.jac[n];
      mesh.quad_weight[g] = basis.weights[n % np] * basis.weights[n / np] * m.jac[n];
      mesh.ja_xi[g] = m.ja_xi[n];
      mesh.ja_eta[g] = m.ja_eta[n];
    }
    mesh.element_area[e] = cell_area(forest.topology(), map, key);
    const auto c = cell_corners(forest.topology(), map, key);
    double edge = std::numeric_limits<double>::max();
    for (int k = 0; k < 4; ++k) edge = std::min(edge, norm(c[(k + 1) % 4] - c[k]));
    mesh.min_edge[e] = edge;
  }
  return mesh;
}

double integrate(const DGMesh& mesh, std::span<const double> data, int nvars, int var) {
  const std::size_t nn = mesh.nodes_per_element();
  double sum = 0.0;
  for (std::size_t e = 0; e < mesh.nelem; ++e) {
    const double* q = data.data() + (e * nvars + var) * nn;
    const double* w = mesh.quad_weight.data() + e * nn;
    for (std::size_t n = 0; n < nn; ++n) sum += w[n] * q[n];
  }
  return sum;
}

void rusanov_flux(std::span<const double> ql, std::span<const double> qr,
                  std::span<const double> fl, std::span<const double> fr, double c_hat,
                  double ds, std::span<double> out) {
  if (c_hat < 0.0) throw std::invalid_argument("rusanov_flux: wave speed must be >= 0");
  for (std::size_t v = 0; v < out.size(); ++v)
    out[v] = 0.5 * (fl[v] + fr[v]) - 0.5 * c_hat * ds * (qr[v] - ql[v]);
}

// ---------------------------------------------------------------------------
// Physics adapters

void AdvectionPhysics::bind(const DGMesh& mesh) {
  nnodes_ = mesh.num_nodes();
  const std::size_t nm = modes_.size();
  field_.resize(nm * nnodes_);
  jxi_.resize(nm * nnodes_);
  jeta_.resize(nm * nnodes_);
  for (std::size_t k = 0; k < nm; ++k)
    for (std::size_t g = 0; g < nnodes_; ++g) {
      const Vec3 w = modes_[k].field(mesh.points[g]);
      field_[k * nnodes_ + g] = w;
      jxi_[k * nnodes_ + g] = dot(mesh.ja_xi[g], w);
      jeta_[k * nnodes_ + g] = dot(mesh.ja_eta[g], w);
    }
  if (coef_.size() != nm) set_time(0.0);
}

void AdvectionPhysics::set_time(double t) {
  coef_.resize(modes_.size());
  for (std::size_t k = 0; k < modes_.size(); ++k) coef_[k] = modes_[k].coefficient(t);
}

Vec3 AdvectionPhysics::wind_at(std::size_t g) const {
  Vec3 w;
  for (std::size_t k = 0; k < coef_.size(); ++k) w += field_[k * nnodes_ + g] * coef_[k];
  return w;
}

double AdvectionPhysics::max_wavespeed(const double*, std::size_t g) const {
  return norm(wind_at(g));
}

void EulerPhysics::bind(const DGMesh& mesh) {
  mesh_ = &mesh;
  bg_.resize(mesh.num_nodes());
  for (std::size_t g = 0; g < bg_.size(); ++g) bg_[g] = background_fn_(mesh.points[g]);
}

double EulerPhysics::pressure(double theta) const {
  if (!(theta > 0.0)) throw NumericalError("Euler: non-positive potential-temperature density");
  return c_.p0 * std::pow(c_.R * theta / c_.p0, gamma_);
}

void EulerPhysics::volume_flux(const double* q, std::size_t g, double* fxi, double* feta) const {
  const BackgroundSample& bg = bg_[g];
  const double rho = bg.rho + q[kRho];
  const double theta = bg.theta_density + q[kTheta];
  const double dp = pressure(theta) - bg.pressure;
  const double u = q[kMomX] / rho;
  const double v = q[kMomY] / rho;
  const double fx[5] = {q[kMomX], q[kMomX] * u + dp, q[kMomY] * u, theta * u, q[kTracer] * u};
  const double fy[5] = {q[kMomY], q[kMomX] * v, q[kMomY] * v + dp, theta * v, q[kTracer] * v};
  const Vec3& a = mesh_->ja_xi[g];
  const Vec3& b = mesh_->ja_eta[g];
  for (int k = 0; k < 5; ++k) {
    fxi[k] = a.x * fx[k] + a.y * fy[k];
    feta[k] = b.x * fx[k] + b.y * fy[k];
  }
}

void EulerPhysics::normal_flux(const double* q, const BackgroundSample& bg, const Vec3& m,
                               double* fn, double* un, double* a) const {
  const double rho = bg.rho + q[kRho];
  const double theta = bg.theta_density + q[kTheta];
  const double p = pressure(theta);
  const double dp = p - bg.pressure;
  const double vn = (q[kMomX] * m.x + q[kMomY] * m.y) / rho;
  fn[0] = q[kMomX] * m.x + q[kMomY] * m.y;
  fn[1] = q[kMomX] * vn + dp * m.x;
  fn[2] = q[kMomY] * vn + dp * m.y;
  fn[3] = theta * vn;
  fn[4] = q[kTracer] * vn;
  *un = vn;
  *a = std::sqrt(gamma_ * p / rho);
}

void EulerPhysics::numerical_flux(const double* ql, const double* qr, std::size_t g,
                                  const Vec3& m, double* out) const {
  const BackgroundSample& bg = bg_[g];
  double fl[5], fr[5], unl, unr, al, ar;
  normal_flux(ql, bg, m, fl, &unl, &al);
  normal_flux(qr, bg, m, fr, &unr, &ar);
  const double ds = std::sqrt(m.x * m.x + m.y * m.y);
  const double c_hat = std::max(std::abs(unl) / ds + al, std::abs(unr) / ds + ar);
  for (int k = 0; k < 5; ++k) out[k] = 0.5 * (fl[k] + fr[k]) - 0.5 * c_hat * ds * (qr[k] - ql[k]);
}

void EulerPhysics::boundary_flux(const double* q, std::size_t g, const Vec3& m,
                                 double* out) const {
  const double ds = std::sqrt(m.x * m.x + m.y * m.y);
  const double nx = m.x / ds, ny = m.y / ds;
  const double mn = q[kMomX] * nx + q[kMomY] * ny;
  double ghost[5] = {q[0], q[kMomX] - 2.0 * mn * nx, q[kMomY] - 2.0 * mn * ny, q[3], q[4]};
  numerical_flux(q, ghost, g, m, out);
}

double EulerPhysics::max_wavespeed(const double* q, std::size_t g) const {
  const BackgroundSample& bg = bg_[g];
  const double rho = bg.rho + q[kRho];
  const double p = pressure(bg.theta_density + q[kTheta]);
  return std::hypot(q[kMomX], q[kMomY]) / rho + std::sqrt(gamma_ * p / rho);
}

void GradientPhysics::volume_flux(const double* q, std::size_t g, double* fxi,
                                  double* feta) const {
  const Vec3& a = mesh_->ja_xi[g];
  const Vec3& b = mesh_->ja_eta[g];
  for (int s = 0; s < 3; ++s) {
    fxi[2 * s] = -a.x * q[s];
    feta[2 * s] = -b.x * q[s];
    fxi[2 * s + 1] = -a.y * q[s];
    feta[2 * s + 1] = -b.y * q[s];
  }
}

void GradientPhysics::numerical_flux(const double* ql, const double* qr, std::size_t,
                                     const Vec3& m, double* out) const {
  for (int s = 0; s < 3; ++s) {
    const double avg = 0.5 * (ql[s] + qr[s]);
    out[2 * s] = -avg * m.x;
    out[2 * s + 1] = -avg * m.y;
  }
}

void GradientPhysics::boundary_flux(const double* q, std::size_t, const Vec3& m,
                                    double* out) const {
  for (int s = 0; s < 3; ++s) {
    out[2 * s] = -q[s] * m.x;
    out[2 * s + 1] = -q[s] * m.y;
  }
}

void DivergencePhysics::volume_flux(const double* q, std::size_t g, double* fxi,
                                    double* feta) const {
  const Vec3& a = mesh_->ja_xi[g];
  const Vec3& b = mesh_->ja_eta[g];
  for (int s = 0; s < 3; ++s) {
    fxi[s] = -mu_ * (a.x * q[2 * s] + a.y * q[2 * s + 1]);
    feta[s] = -mu_ * (b.x * q[2 * s] + b.y * q[2 * s + 1]);
  }
}

void DivergencePhysics::numerical_flux(const double* ql, const double* qr, std::size_t,
                                       const Vec3& m, double* out) const {
  for (int s = 0; s < 3; ++s)
    out[s] = -mu_ * 0.5 *
             ((ql[2 * s] + qr[2 * s]) * m.x + (ql[2 * s + 1] + qr[2 * s + 1]) * m.y);
}

// ---------------------------------------------------------------------------
// Kernel

namespace {

template <int NP, class Phys>
[[gnu::flatten]] void rhs_kernel(const DGMesh& mesh, const MortarOperators& ops, const Phys& phys, FluxMode mode,
                const double* q, double* rhs) {
  constexpr int NN = NP * NP;
  constexpr int KI = Phys::kIn;
  constexpr int KO = Phys::kOut;
  double d[NP][NP], dt[NP][NP];
  for (int i = 0; i < NP; ++i)
    for (int k = 0; k < NP; ++k) {
      d[i][k] = ops.basis.diff_matrix(i, k);
      dt[k][i] = d[i][k];
    }
  const double inv_w0 = 1.0 / ops.basis.weights[0];
  const std::size_t nelem = mesh.nelem;

  thread_local std::vector<double> trace_buf;
  trace_buf.resize(nelem * 4 * KO * NP);
  double* trace = trace_buf.data();
  auto tr = [&](std::size_t e, int side, int v) { return trace + ((e * 4 + side) * KO + v) * NP; };

  for (std::size_t e = 0; e < nelem; ++e) {
    const double* qe = q + e * KI * NN;
    double* re = rhs + e * KO * NN;
    double fx[KO][NN], fe[KO][NN];
    for (int n = 0; n < NN; ++n) {
      double qn[KI], a[KO], b[KO];
      for (int v = 0; v < KI; ++v) qn[v] = qe[v * NN + n];
      const std::size_t g = e * NN + n;
      phys.volume_flux(qn, g, a, b);
      for (int v = 0; v < KO; ++v) {
        fx[v][n] = a[v];
        fe[v][n] = b[v];
      }
      if constexpr (Phys::kHasSource) {
        double s[KO];
        phys.source(qn, g, s);
        for (int v = 0; v < KO; ++v) re[v * NN + n] = s[v];
      } else {
        for (int v = 0; v < KO; ++v) re[v * NN + n] = 0.0;
      }
    }
    const double* ij = mesh.inv_jac.data() + e * NN;
    for (int v = 0; v < KO; ++v) {
      // Loop order keeps the innermost index contiguous.
      double div[NN] = {};
      for (int j = 0; j < NP; ++j)
        for (int k = 0; k < NP; ++k) {
          const double fxk = fx[v][k + NP * j];
          const double djk = d[j][k];
          for (int i = 0; i < NP; ++i) div[i + NP * j] += dt[k][i] * fxk + djk * fe[v][i + NP * k];
        }
      for (int n = 0; n < NN; ++n) re[v * NN + n] -= ij[n] * div[n];
      double* tw = tr(e, kWest, v);
      double* te = tr(e, kEast, v);
      double* ts = tr(e, kSouth, v);
      double* tn = tr(e, kNorth, v);
      for (int k = 0; k < NP; ++k) {
        tw[k] = -fx[v][NP * k];
        te[k] = fx[v][NP - 1 + NP * k];
        ts[k] = -fe[v][k];
        tn[k] = fe[v][k + NP * (NP - 1)];
      }
    }
  }

  auto gather = [&](std::size_t e, int node, double* out) {
    const double* qe = q + e * KI * NN;
    for (int v = 0; v < KI; ++v) out[v] = qe[v * NN + node];
  };
  auto lift = [&](std::size_t e, int node, int v, double jump) {
    rhs[e * KO * NN + v * NN + node] -= jump * mesh.inv_jac[e * NN + node] * inv_w0;
  };

  for (const FaceLink& f : mesh.faces) {
    const std::size_t c = std::size_t(f.left);
    if (f.kind == FaceKind::kBoundary) {
      const double* tl = tr(c, f.left_side, 0);
      for (int k = 0; k < NP; ++k) {
        const int n = face_node(NP, f.left_side, k);
        double qn[KI], g[KO];
        gather(c, n, qn);
        phys.boundary_flux(qn, c * NN + n, mesh.outward(c, f.left_side, n), g);
        for (int v = 0; v < KO; ++v) lift(c, n, v, g[v] - tl[v * NP + k]);
      }
      continue;
    }
    if (f.kind == FaceKind::kConformal) {
      const std::size_t r = std::size_t(f.right[0]);
      const double* tl = tr(c, f.left_side, 0);
      const double* trr = tr(r, f.right_side, 0);
      for (int k = 0; k < NP; ++k) {
        const int nl = face_node(NP, f.left_side, k);
        const int kr = f.reversed ? NP - 1 - k : k;
        const int nr = face_node(NP, f.right_side, kr);
        double ql[KI], qr[KI], g[KO];
        gather(c, nl, ql);
        gather(r, nr, qr);
        phys.numerical_flux(ql, qr, c * NN + nl, mesh.outward(c, f.left_side, nl), g);
        for (int v = 0; v < KO; ++v) {
          lift(c, nl, v, g[v] - tl[v * NP + k]);
          lift(r, nr, v, -g[v] - trr[v * NP + kr]);
        }
      }
      continue;
    }

    // 2:1 face: coarse element c, fine elements in coarse along-order.
    double qc[KI][NP];
    for (int j = 0; j < NP; ++j) {
      double qn[KI];
      gather(c, face_node(NP, f.left_side, j), qn);
      for (int v = 0; v < KI; ++v) qc[v][j] = qn[v];
    }
    double qf[2][KI][NP];
    for (int h = 0; h < 2; ++h)
      for (int k = 0; k < NP; ++k) {
        const int kf = f.reversed ? NP - 1 - k : k;
        double qn[KI];
        gather(std::size_t(f.right[h]), face_node(NP, f.right_side, kf), qn);
        for (int v = 0; v < KI; ++v) qf[h][v][k] = qn[v];
      }
    const double* tc = tr(c, f.left_side, 0);
    double gc[KO][NP] = {};

    if (mode == FluxMode::kLinearized) {
      if constexpr (!Phys::kLinearizable) {
        throw std::invalid_argument("linearized flux mode requires the advection model");
      } else {
        double a[NP] = {}, b[NP] = {};
        for (int h = 0; h < 2; ++h) {
          const std::size_t fe_ = std::size_t(f.right[h]);
          const double* tf = tr(fe_, f.right_side, 0);
          const DenseMatrix& p2c = ops.proj.parent_to_child[h];
          double gm[NP], qs[NP];
          for (int k = 0; k < NP; ++k) {
            const int kf = f.reversed ? NP - 1 - k : k;
            const int nf = face_node(NP, f.right_side, kf);
            double qm = 0.0;
            for (int j = 0; j < NP; ++j) qm += p2c(k, j) * qc[0][j];
            const Vec3 m = mesh.outward(fe_, f.right_side, nf) * -1.0;
            const double un = phys.normal_velocity(fe_ * NN + nf, m);
            const double qstar = un >= 0.0 ? qm : qf[h][0][k];
            gm[k] = un;
            qs[k] = qstar;
            lift(fe_, nf, 0, -un * qstar - tf[kf]);
          }
          const double s = ops.proj.scale_factors[h];
          for (int j = 0; j < NP; ++j)
            for (int k = 0; k < NP; ++k) {
              a[j] += ops.back[h](j, k) * gm[k];
              b[j] += s * ops.back[h](j, k) * qs[k];
            }
        }
        for (int j = 0; j < NP; ++j) gc[0][j] = a[j] * b[j];
      }
    } else {
      for (int h = 0; h < 2; ++h) {
        const std::size_t fe_ = std::size_t(f.right[h]);
        const double* tf = tr(fe_, f.right_side, 0);
        const DenseMatrix& p2c = ops.proj.parent_to_child[h];
        double gm[KO][NP];
        for (int k = 0; k < NP; ++k) {
          const int kf = f.reversed ? NP - 1 - k : k;
          const int nf = face_node(NP, f.right_side, kf);
          double qm[KI], qn[KI], g[KO];
          for (int v = 0; v < KI; ++v) {
            double s = 0.0;
            for (int j = 0; j < NP; ++j) s += p2c(k, j) * qc[v][j];
            qm[v] = s;
            qn[v] = qf[h][v][k];
          }
          const Vec3 m = mesh.outward(fe_, f.right_side, nf) * -1.0;
          phys.numerical_flux(qm, qn, fe_ * NN + nf, m, g);
          for (int v = 0; v < KO; ++v) {
            gm[v][k] = g[v];
            lift(fe_, nf, v, -g[v] - tf[v * NP + kf]);
          }
        }
        if (mode == FluxMode::kMortar) {
          for (int v = 0; v < KO; ++v)
            for (int j = 0; j < NP; ++j) {
              double s = 0.0;
              for (int k = 0; k < NP; ++k) s += ops.back[h](j, k) * gm[v][k];
              gc[v][j] += s;
            }
        }
      }
      if (mode == FluxMode::kPointwise) {
        for (int j = 0; j < NP; ++j) {
          const int n = face_node(NP, f.left_side, j);
          const int half = ops.coarse_node_half[j];
          double qn[KI], qo[KI], g[KO];
          for (int v = 0; v < KI; ++v) {
            qn[v] = qc[v][j];
            double s = 0.0;
            if (half >= 0) {
              for (int k = 0; k < NP; ++k) s += ops.coarse_from_fine[half](j, k) * qf[half][v][k];
            } else {
              for (int hh = 0; hh < 2; ++hh)
                for (int k = 0; k < NP; ++k)
                  s += 0.5 * ops.coarse_from_fine[hh](j, k) * qf[hh][v][k];
            }
            qo[v] = s;
          }
          phys.numerical_flux(qn, qo, c * NN + n, mesh.outward(c, f.left_side, n), g);
          for (int v = 0; v < KO; ++v) gc[v][j] = g[v];
        }
      }
    }
    for (int j = 0; j < NP; ++j) {
      const int n = face_node(NP, f.left_side, j);
      for (int v = 0; v < KO; ++v) lift(c, n, v, gc[v][j] - tc[v * NP + j]);
    }
  }
}

template <class Phys>
void dispatch(const DGMesh& mesh, const MortarOperators& ops, const Phys& phys, FluxMode mode,
              const double* q, double* rhs) {
  switch (mesh.np) {
    case 2: rhs_kernel<2>(mesh, ops, phys, mode, q, rhs); break;
    case 3: rhs_kernel<3>(mesh, ops, phys, mode, q, rhs); break;
    case 4: rhs_kernel<4>(mesh, ops, phys, mode, q, rhs); break;
    case 5: rhs_kernel<5>(mesh, ops, phys, mode, q, rhs); break;
    case 6: rhs_kernel<6>(mesh, ops, phys, mode, q, rhs); break;
    case 7: rhs_kernel<7>(mesh, ops, phys, mode, q, rhs); break;
    case 8: rhs_kernel<8>(mesh, ops, phys, mode, q, rhs); break;
    default: throw std::invalid_argument("strong_form_rhs: supported orders are 1..7");
  }
}

}  // namespace

template <class Phys>
void strong_form_rhs(const DGMesh& mesh, const MortarOperators& ops, const Phys& phys,
                     FluxMode mode, std::span<const double> q, std::span<double> rhs) {
  if (ops.np() != mesh.np) throw std::invalid_argument("strong_form_rhs: order mismatch");
  const std::size_t nn = mesh.nodes_per_element();
  if (q.size() != mesh.nelem * nn * Phys::kIn || rhs.size() != mesh.nelem * nn * Phys::kOut)
    throw std::invalid_argument("strong_form_rhs: state size does not match mesh");
  dispatch(mesh, ops, phys, mode, q.data(), rhs.data());
}

template void strong_form_rhs<AdvectionPhysics>(const DGMesh&, const MortarOperators&,
                                                const AdvectionPhysics&, FluxMode,
                                                std::span<const double>, std::span<double>);
template void strong_form_rhs<EulerPhysics>(const DGMesh&, const MortarOperators&,
                                            const EulerPhysics&, FluxMode,
                                            std::span<const double>, std::span<double>);
template void strong_form_rhs<GradientPhysics>(const DGMesh&, const MortarOperators&,
                                               const GradientPhysics&, FluxMode,
                                               std::span<const double>, std::span<double>);
template void strong_form_rhs<DivergencePhysics>(const DGMesh&, const MortarOperators&,
                                                 const DivergencePhysics&, FluxMode,
                                                 std::span<const double>, std::span<double>);

void apply_artificial_viscosity(const DGMesh& mesh, const MortarOperators& ops,
                                std::span<const double> state, int nvars,
                                std::array<int, 3> vars, double mu, std::span<double> rhs) {
  if (mu < 0.0) throw std::invalid_argument("apply_artificial_viscosity: mu must be >= 0");
  if (mu == 0.0) return;
  const std::size_t nn = mesh.nodes_per_element();
  thread_local std::vector<double> sel, grad, out;
  sel.resize(mesh.nelem * 3 * nn);
  grad.resize(mesh.nelem * 6 * nn);
  out.resize(mesh.nelem * 3 * nn);
  for (std::size_t e = 0; e < mesh.nelem; ++e)
    for (int s = 0; s < 3; ++s)
      std::copy_n(state.data() + (e * nvars + vars[s]) * nn, nn, sel.data() + (e * 3 + s) * nn);
  GradientPhysics gp;
  gp.bind(mesh);
  strong_form_rhs(mesh, ops, gp, FluxMode::kMortar, sel, grad);
  DivergencePhysics dp(mu);
  dp.bind(mesh);
  strong_form_rhs(mesh, ops, dp, FluxMode::kMortar, grad, out);
  for (std::size_t e = 0; e < mesh.nelem; ++e)
    for (int s = 0; s < 3; ++s) {
      double* r = rhs.data() + (e * nvars + vars[s]) * nn;
      const double* o = out.data() + (e * 3 + s) * nn;
      for (std::size_t n = 0; n < nn; ++n) r[n] += o[n];
    }
}

template <class Phys>
double cfl_time_step(const DGMesh& mesh, const Phys& phys, std::span<const double> q, double cfl) {
  const std::size_t nn = mesh.nodes_per_element();
  const double scale = double(mesh.np) * mesh.np;
  double dt = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < mesh.nelem; ++e) {
    double c = 0.0;
    for (std::size_t n = 0; n < nn; ++n) {
      double qn[Phys::kIn];
      for (int v = 0; v < Phys::kIn; ++v) qn[v] = q[(e * Phys::kIn + v) * nn + n];
      c = std::max(c, phys.max_wavespeed(qn, e * nn + n));
    }
    if (c > 0.0) dt = std::min(dt, cfl * mesh.min_edge[e] / scale / c);
  }
  return dt;
}

template double cfl_time_step<AdvectionPhysics>(const DGMesh&, const AdvectionPhysics&,
                                                std::span<const double>, double);
template double cfl_time_step<EulerPhysics>(const DGMesh&, const EulerPhysics&,
                                            std::span<const double>, double);

void step_forward_euler(const RhsFn& rhs, double t, double dt, std::vector<double>& q,
                        StepWorkspace& ws) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_forward_euler: dt must be positive");
  ws.k.resize(q.size());
  rhs(t, q, ws.k);
  for (std::size_t i = 0; i < q.size(); ++i) q[i] += dt * ws.k[i];
}

void step_ssprk3(const RhsFn& rhs, double t, double dt, std::vector<double>& q, StepWorkspace& ws) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_ssprk3: dt must be positive");
  const std::size_t n = q.size();
  ws.k.resize(n);
  ws.stage.resize(n);
  rhs(t, q, ws.k);
  for (std::size_t i = 0; i < n; ++i) ws.stage[i] = q[i] + dt * ws.k[i];
  rhs(t + dt, ws.stage, ws.k);
  for (std::size_t i = 0; i < n; ++i)
    ws.stage[i] = 0.75 * q[i] + 0.25 * (ws.stage[i] + dt * ws.k[i]);
  rhs(t + 0.5 * dt, ws.stage, ws.k);
  for (std::size_t i = 0; i < n; ++i)
    q[i] = q[i] / 3.0 + 2.0 / 3.0 * (ws.stage[i] + dt * ws.k[i]);
}

}  // namespace amrlab
