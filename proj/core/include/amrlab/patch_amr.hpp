#pragma once

// Level-based block-structured AMR with a cell-centered finite-volume
// solver: boxes, Berger-Rigoutsos clustering, proper nesting, ghost
// filling, subcycled SSP-RK3 with flux registers, refluxing and
// average-down.
//
// Index conventions: a level-l cell (i, j) covers
// [xlo + i dx_l, xlo + (i+1) dx_l] x [...]; dx_l = dx_0 / 2^l.

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "amrlab/euler_model.hpp"
#include "amrlab/sphere_geometry.hpp"
#include "amrlab/tree_mesh.hpp"

namespace amrlab {

struct IndexBox {
  int ilo = 0, jlo = 0, ihi = -1, jhi = -1;  // inclusive
  int level = 0;

  int width() const { return ihi - ilo + 1; }
  int height() const { return jhi - jlo + 1; }
  long cells() const { return empty() ? 0 : long(width()) * height(); }
  bool empty() const { return ihi < ilo || jhi < jlo; }
  bool contains(int i, int j) const { return i >= ilo && i <= ihi && j >= jlo && j <= jhi; }
  bool intersects(const IndexBox& o) const {
    return !(o.ihi < ilo || o.ilo > ihi || o.jhi < jlo || o.jlo > jhi);
  }
  IndexBox intersection(const IndexBox& o) const {
    return {std::max(ilo, o.ilo), std::max(jlo, o.jlo), std::min(ihi, o.ihi), std::min(jhi, o.jhi),
            level};
  }
  IndexBox refined(int r = 2) const {
    return {ilo * r, jlo * r, (ihi + 1) * r - 1, (jhi + 1) * r - 1, level + 1};
  }
  /// Floor division; the result covers every parent of this box's cells.
  IndexBox coarsened(int r = 2) const;
  IndexBox grown(int n) const { return {ilo - n, jlo - n, ihi + n, jhi + n, level}; }
  bool operator==(const IndexBox& o) const {
    return ilo == o.ilo && jlo == o.jlo && ihi == o.ihi && jhi == o.jhi && level == o.level;
  }
};

/// Tagged cells of one level on an nx x ny index domain.
struct TagGrid {
  int nx = 0, ny = 0;
  std::vector<char> flag;

  TagGrid() = default;
  TagGrid(int nx_, int ny_) : nx(nx_), ny(ny_), flag(std::size_t(nx_) * ny_, 0) {}
  char& at(int i, int j) { return flag[std::size_t(j) * nx + i]; }
  char at(int i, int j) const { return flag[std::size_t(j) * nx + i]; }
  long count() const;
};

struct ClusterParams {
  double efficiency = 0.7;  // minimum tagged / total fraction
  int blocking = 2;         // box dimensions and offsets are multiples of this
  int max_size = 64;        // longest allowed box side (multiple of blocking)

  /// Throws std::invalid_argument for efficiency outside (0,1], blocking < 1
  /// or max_size not a positive multiple of blocking.
  void validate() const;
};

/// Signature-based clustering. Every tag is covered; each box is either
/// efficient enough or a single blocking unit. When `allowed` is given
/// (one flag per blocking unit, row-major) boxes never include a unit that
/// is not allowed and tags in such units are ignored. The domain extents
/// must be multiples of the blocking factor.
std::vector<IndexBox> berger_rigoutsos(const TagGrid& tags, const ClusterParams& params,
                                       const std::vector<char>* allowed = nullptr);

/// 2nd, 3rd and 4th order face values at m - 1/2 from q[0..3] =
/// (q_{m-2}, q_{m-1}, q_m, q_{m+1}). `wind` only matters for order 3.
double face_interp(const double* q, int order, double wind);

enum class PatchBoundary { kPeriodic, kWall };

struct PatchDomain {
  int nx = 16, ny = 16;  // level-0 cells
  double xlo = 0.0, xhi = 1.0, ylo = 0.0, yhi = 1.0;
  PatchBoundary bx = PatchBoundary::kPeriodic;
  PatchBoundary by = PatchBoundary::kPeriodic;
};

/// Cell data of one box with a ghost halo.
struct Patch {
  IndexBox box;
  int nvars = 1;
  int ng = 2;
  std::vector<double> data;

  Patch() = default;
  Patch(const IndexBox& b, int nv, int ghosts);
  int stride() const { return box.width() + 2 * ng; }
  int rows() const { return box.height() + 2 * ng; }
  std::size_t index(int v, int i, int j) const {
    return (std::size_t(v) * rows() + (j - box.jlo + ng)) * stride() + (i - box.ilo + ng);
  }
  double& at(int v, int i, int j) { return data[index(v, i, j)]; }
  double at(int v, int i, int j) const { return data[index(v, i, j)]; }
};

struct LevelGeometry {
  int level = 0;
  int nx = 0, ny = 0;
  double dx = 0.0, dy = 0.0;
  double xlo = 0.0, ylo = 0.0;
  double xc(int i) const { return xlo + (i + 0.5) * dx; }
  double yc(int j) const { return ylo + (j + 0.5) * dy; }
};

/// Finite-volume model: face fluxes of one patch. fx has nvars x h x (w+1)
/// entries (face i at the low side of cell i), fy nvars x (h+1) x w.
class FvPhysics {
 public:
  virtual ~FvPhysics() = default;
  virtual int nvars() const = 0;
  /// Sign applied to variable v when mirrored across an x (axis 0) or y wall.
  virtual double mirror_sign(int v, int axis) const = 0;
  virtual void fluxes(const Patch& p, const LevelGeometry& geo, double t, int order,
                      std::vector<double>& fx, std::vector<double>& fy) const = 0;
  /// Cell sources, nvars x h x w.
  virtual void source(const Patch& p, const LevelGeometry&, std::vector<double>& s) const {
    s.assign(std::size_t(nvars()) * p.box.cells(), 0.0);
  }
  virtual double max_speed(const Patch& p, const LevelGeometry& geo, double t) const = 0;
};

/// Scalar advection by a prescribed wind evaluated at face centers.
class FvAdvection : public FvPhysics {
 public:
  using Wind = std::function<Vec3(double x, double y, double t)>;
  explicit FvAdvection(Wind wind) : wind_(std::move(wind)) {}
  int nvars() const override { return 1; }
  double mirror_sign(int, int) const override { return 1.0; }
  void fluxes(const Patch& p, const LevelGeometry& geo, double t, int order,
              std::vector<double>& fx, std::vector<double>& fy) const override;
  double max_speed(const Patch& p, const LevelGeometry& geo, double t) const override;

 private:
  Wind wind_;
};

/// Perturbation Euler: face-interpolated momentum times face-interpolated
/// specific quantities, plus the pressure perturbation.
class FvEuler : public FvPhysics {
 public:
  using Background = std::function<BackgroundSample(double x, double y)>;
  FvEuler(PhysicalConstants c, Background bg) : c_(c), bg_(std::move(bg)) {}
  int nvars() const override { return kEulerVars; }
  double mirror_sign(int v, int axis) const override {
    return (axis == 0 && v == kMomX) || (axis == 1 && v == kMomY) ? -1.0 : 1.0;
  }
  void fluxes(const Patch& p, const LevelGeometry& geo, double t, int order,
              std::vector<double>& fx, std::vector<double>& fy) const override;
  void source(const Patch& p, const LevelGeometry& geo, std::vector<double>& s) const override;
  double max_speed(const Patch& p, const LevelGeometry& geo, double t) const override;

 private:
  PhysicalConstants c_;
  Background bg_;
};

struct PatchConfig {
  PatchDomain domain;
  int max_level = 1;
  ClusterParams cluster;     // blocking and max_size in fine-level cells
  RegridPolicy policy;       // interval, buffer, refine threshold
  int order = 2;             // face interpolation order
  int ghosts = 2;
  int nesting_width = 2;     // in coarse cells
  bool reflux = true;        // false: one-way coupling
  double cfl_limit = 1.0;

  void validate() const;
};

struct PatchLevel {
  LevelGeometry geo;
  std::vector<Patch> patches;
  std::vector<Patch> old;      // snapshot at t_old for time interpolation
  std::vector<int> owner;      // cell -> patch index or -1
  std::vector<char> covered;   // cell covered by the next finer level
  double t_old = 0.0, t_new = 0.0;
};

/// Initial values at a point (cell centers), one entry per variable.
using PointInit = std::function<void(double x, double y, double* q)>;
/// Refinement indicator evaluated per cell; tag where > policy.refine_above.
using TagIndicator = std::function<double(const double* q, double x, double y)>;

class PatchHierarchy {
 public:
  PatchHierarchy(PatchConfig config, std::shared_ptr<const FvPhysics> physics);

  const PatchConfig& config() const { return cfg_; }
  int num_levels() const { return int(levels_.size()); }
  const PatchLevel& level(int l) const { return levels_[l]; }
  double time() const { return time_; }

  /// Level 0 over the whole domain, then finer levels built from `tag` and
  /// filled directly from `init`.
  void initialize(const PointInit& init, const TagIndicator& tag);
  /// Level 0 plus the given fine boxes (nested, level 1 only).
  void initialize_with_boxes(const PointInit& init, const std::vector<IndexBox>& level1);

  /// One coarse step of dt0; finer levels subcycle by 2 per level.
  void advance(double dt0);
  /// Rebuild levels >= 1 from `tag`; data copied or interpolated conservatively.
  void regrid(const TagIndicator& tag);

  /// Fill halos of level l at time t. Throws std::runtime_error if a ghost
  /// cell cannot be reached (nesting violated).
  void fill_ghosts(int l, double t);

  /// Sum over cells not covered by a finer level of q * cell volume.
  double integral(int var) const;
  std::vector<long> cells_per_level() const;
  double max_abs_deviation(int var, double value) const;
  /// Largest stable dt0 relative to cfl_limit at the current state.
  double stable_dt(double cfl) const;
  int cfl_warnings() const { return cfl_warnings_; }

  /// Full scans: boxes within a level are disjoint, and each fine box lies
  /// within the nesting region of its parent level.
  bool boxes_disjoint() const;
  bool properly_nested() const;

  /// Cells of level l in which the nesting region allows refinement.
  std::vector<char> nesting_mask(int l) const;

  /// Visit every cell of level l not covered by a finer level.
  void for_each_leaf_cell(int l, const std::function<void(double x, double y, const double* q,
                                                          double volume)>& fn) const;

 private:
  LevelGeometry make_geometry(int l) const;
  void rebuild_maps(int l);
  void set_level_boxes(int l, const std::vector<IndexBox>& boxes);
  void advance_level(int l, double t, double dt);
  void average_down(int l);
  void apply_reflux(int l);
  double coarse_interp(int l, int fi, int fj, int v, double t) const;
  // Time-interpolated value of an interior cell of level l (wrapped or
  // mirrored into the domain). Throws if no box of level l holds it.
  double level_value(int l, int i, int j, int v, double t) const;
  std::uint64_t face_key(int dir, int i, int j) const;

  PatchConfig cfg_;
  std::shared_ptr<const FvPhysics> phys_;
  std::vector<PatchLevel> levels_;
  // Register of the interface between level l-1 and l, stored at index l.
  std::vector<std::unordered_map<std::uint64_t, std::vector<double>>> registers_;
  double time_ = 0.0;
  int cfl_warnings_ = 0;
};

/// Clip fine boxes (level l+1 index space) to the nesting region of the
/// coarse level described by `mask` (level-l cells). Output boxes cover
/// exactly the allowed fine cells of the input boxes.
std::vector<IndexBox> enforce_proper_nesting(const std::vector<IndexBox>& fine_boxes,
                                             const std::vector<char>& mask, int nx, int ny);

/// Round-robin owner per box.
std::vector<int> round_robin_assignment(std::size_t nboxes, int nranks);

}  // namespace amrlab
