#pragma once

// Strong-form nodal dGSEM on a quad forest: element metrics, Rusanov
// interface fluxes, mortar coupling on 2:1 faces, artificial viscosity and
// explicit time stepping.
//
// Layouts: node index n = i + NP j for (xi_i, eta_j); element data are
// stored [element][variable][node].

#include <array>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "amrlab/euler_model.hpp"
#include "amrlab/mortar_transfer.hpp"
#include "amrlab/sphere_geometry.hpp"
#include "amrlab/tensor_basis.hpp"
#include "amrlab/tree_mesh.hpp"

namespace amrlab {

struct MetricTerms {
  std::vector<double> jac;             // per node
  std::vector<Vec3> ja_xi, ja_eta;     // J a^xi, J a^eta per node
  // Per side (W, E, S, N) and along-face node: outward unit normal and
  // surface Jacobian |m|.
  std::array<std::vector<Vec3>, 4> normal;
  std::array<std::vector<double>, 4> surface_jac;
};

/// Isoparametric metrics from nodal physical points (layout i + NP j).
/// Curved elements (points not in the z = 0 plane) use the pseudo-inverse
/// surface Jacobian. Throws NumericalError for a non-positive Jacobian.
MetricTerms compute_metrics(std::span<const Vec3> points, const NodalBasis& basis);

/// Nodal points of a forest cell for the given mapping.
std::vector<Vec3> element_points(const ForestTopology& topo, const TileMapping& map,
                                 const CellKey& key, const NodalBasis& basis);

inline int face_node(int np, int side, int k) {
  switch (side) {
    case kWest: return np * k;
    case kEast: return np - 1 + np * k;
    case kSouth: return k;
    default: return k + np * (np - 1);
  }
}

struct DGMesh {
  int order = 0;
  int np = 0;
  std::size_t nelem = 0;
  bool curved = false;
  std::vector<CellKey> keys;
  std::vector<FaceLink> faces;
  // Flat per-node arrays (nelem * np * np).
  std::vector<Vec3> points;
  std::vector<double> jac, inv_jac, quad_weight;  // quad_weight = w_i w_j J
  std::vector<Vec3> ja_xi, ja_eta;
  std::vector<double> element_area;   // planar or spherical-excess
  std::vector<double> min_edge;       // shortest corner-to-corner edge

  std::size_t nodes_per_element() const { return std::size_t(np) * np; }
  std::size_t num_nodes() const { return nelem * nodes_per_element(); }
  /// Outward contravariant vector (Ja^xi or Ja^eta with sign) at a face node.
  Vec3 outward(std::size_t elem, int side, int node) const {
    const std::size_t g = elem * nodes_per_element() + node;
    switch (side) {
      case kWest: return ja_xi[g] * -1.0;
      case kEast: return ja_xi[g];
      case kSouth: return ja_eta[g] * -1.0;
      default: return ja_eta[g];
    }
  }
};

DGMesh build_dg_mesh(const QuadForest& forest, const TileMapping& map, const NodalBasis& basis);

/// Sum over nodes of w_i w_j J q for one variable.
double integrate(const DGMesh& mesh, std::span<const double> data, int nvars, int var);

/// Rusanov flux: 0.5 (FnL + FnR) - 0.5 c (qR - qL) ds, where Fn are the
/// normal physical fluxes already multiplied by ds.
void rusanov_flux(std::span<const double> q_left, std::span<const double> q_right,
                  std::span<const double> fn_left, std::span<const double> fn_right,
                  double c_hat, double ds, std::span<double> out);

/// Wind as a sum of fixed spatial modes with time-dependent coefficients.
struct WindMode {
  std::function<Vec3(const Vec3&)> field;
  std::function<double(double)> coefficient;
};

/// Passive scalar advection by a prescribed wind; walls are no-flux.
class AdvectionPhysics {
 public:
  static constexpr int kIn = 1;
  static constexpr int kOut = 1;
  static constexpr bool kHasSource = false;
  static constexpr bool kLinearizable = true;

  explicit AdvectionPhysics(std::vector<WindMode> modes) : modes_(std::move(modes)) {}

  void bind(const DGMesh& mesh);
  void set_time(double t);
  Vec3 wind_at(std::size_t gnode) const;

  void volume_flux(const double* q, std::size_t g, double* fxi, double* feta) const {
    double uxi = 0.0, ueta = 0.0;
    for (std::size_t k = 0; k < coef_.size(); ++k) {
      uxi += coef_[k] * jxi_[k * nnodes_ + g];
      ueta += coef_[k] * jeta_[k * nnodes_ + g];
    }
    fxi[0] = q[0] * uxi;
    feta[0] = q[0] * ueta;
  }
  double normal_velocity(std::size_t g, const Vec3& m) const {
    double un = 0.0;
    for (std::size_t k = 0; k < coef_.size(); ++k) un += coef_[k] * dot(field_[k * nnodes_ + g], m);
    return un;
  }
  void numerical_flux(const double* ql, const double* qr, std::size_t g, const Vec3& m,
                      double* out) const {
    const double un = normal_velocity(g, m);
    out[0] = 0.5 * (ql[0] + qr[0]) * un - 0.5 * std::abs(un) * (qr[0] - ql[0]);
  }
  void boundary_flux(const double*, std::size_t, const Vec3&, double* out) const { out[0] = 0.0; }
  void source(const double*, std::size_t, double*) const {}
  double max_wavespeed(const double*, std::size_t g) const;

 private:
  std::vector<WindMode> modes_;
  std::vector<double> coef_;
  std::size_t nnodes_ = 0;
  std::vector<Vec3> field_;
  std::vector<double> jxi_, jeta_;
};

/// Compressible Euler in perturbation form with a background per node.
class EulerPhysics {
 public:
  static constexpr int kIn = kEulerVars;
  static constexpr int kOut = kEulerVars;
  static constexpr bool kHasSource = true;
  static constexpr bool kLinearizable = false;

  using BackgroundFn = std::function<BackgroundSample(const Vec3&)>;

  EulerPhysics(PhysicalConstants c, BackgroundFn background)
      : c_(c), gamma_(c.gamma()), background_fn_(std::move(background)) {}

  void bind(const DGMesh& mesh);
  void set_time(double) {}
  const PhysicalConstants& constants() const { return c_; }
  const std::vector<BackgroundSample>& background() const { return bg_; }

  void volume_flux(const double* q, std::size_t g, double* fxi, double* feta) const;
  void numerical_flux(const double* ql, const double* qr, std::size_t g, const Vec3& m,
                      double* out) const;
  void boundary_flux(const double* q, std::size_t g, const Vec3& m, double* out) const;
  void source(const double* q, std::size_t, double* s) const {
    s[0] = 0.0;
    s[1] = 0.0;
    s[2] = -q[kRho] * c_.g;
    s[3] = 0.0;
    s[4] = 0.0;
  }
  double normal_velocity(std::size_t, const Vec3&) const { return 0.0; }
  double max_wavespeed(const double* q, std::size_t g) const;

  /// Physical normal flux F(q).m and the sound speed at one point.
  void normal_flux(const double* q, const BackgroundSample& bg, const Vec3& m, double* fn,
                   double* un, double* a) const;

 private:
  double pressure(double theta) const;

  PhysicalConstants c_;
  double gamma_;
  BackgroundFn background_fn_;
  std::vector<BackgroundSample> bg_;
  const DGMesh* mesh_ = nullptr;
};

/// First pass of the viscous operator: gradients of kIn scalars.
class GradientPhysics {
 public:
  static constexpr int kIn = 3;
  static constexpr int kOut = 6;
  static constexpr bool kHasSource = false;
  static constexpr bool kLinearizable = false;

  void bind(const DGMesh& mesh) { mesh_ = &mesh; }
  void set_time(double) {}
  void volume_flux(const double* q, std::size_t g, double* fxi, double* feta) const;
  void numerical_flux(const double* ql, const double* qr, std::size_t g, const Vec3& m,
                      double* out) const;
  void boundary_flux(const double* q, std::size_t g, const Vec3& m, double* out) const;
  void source(const double*, std::size_t, double*) const {}
  double normal_velocity(std::size_t, const Vec3&) const { return 0.0; }

 private:
  const DGMesh* mesh_ = nullptr;
};

/// Second pass: mu times the divergence of the gradient field.
class DivergencePhysics {
 public:
  static constexpr int kIn = 6;
  static constexpr int kOut = 3;
  static constexpr bool kHasSource = false;
  static constexpr bool kLinearizable = false;

  explicit DivergencePhysics(double mu) : mu_(mu) {}
  void bind(const DGMesh& mesh) { mesh_ = &mesh; }
  void set_time(double) {}
  void volume_flux(const double* q, std::size_t g, double* fxi, double* feta) const;
  void numerical_flux(const double* ql, const double* qr, std::size_t g, const Vec3& m,
                      double* out) const;
  void boundary_flux(const double*, std::size_t, const Vec3&, double* out) const {
    for (int k = 0; k < kOut; ++k) out[k] = 0.0;
  }
  void source(const double*, std::size_t, double*) const {}
  double normal_velocity(std::size_t, const Vec3&) const { return 0.0; }

 private:
  double mu_;
  const DGMesh* mesh_ = nullptr;
};

/// Strong-form tendency dq/dt of `phys` on `mesh`. Conformal faces use one
/// flux evaluation shared by both sides; 2:1 faces follow `mode`.
/// Throws std::invalid_argument for kLinearized with a non-advective model.
template <class Phys>
void strong_form_rhs(const DGMesh& mesh, const MortarOperators& ops, const Phys& phys,
                     FluxMode mode, std::span<const double> q, std::span<double> rhs);

/// Adds mu * Laplacian of the listed variables (three of them) to `rhs`.
void apply_artificial_viscosity(const DGMesh& mesh, const MortarOperators& ops,
                                std::span<const double> state, int nvars,
                                std::array<int, 3> vars, double mu, std::span<double> rhs);

/// Largest stable step by dt <= cfl * min(edge / (N+1)^2 / c_hat).
template <class Phys>
double cfl_time_step(const DGMesh& mesh, const Phys& phys, std::span<const double> q, double cfl);

using RhsFn = std::function<void(double t, std::span<const double> q, std::span<double> rhs)>;

struct StepWorkspace {
  std::vector<double> k, stage;
};

void step_forward_euler(const RhsFn& rhs, double t, double dt, std::vector<double>& q,
                        StepWorkspace& ws);
/// Shu-Osher SSP-RK3, stage times t, t + dt, t + dt/2.
void step_ssprk3(const RhsFn& rhs, double t, double dt, std::vector<double>& q, StepWorkspace& ws);

}  // namespace amrlab
