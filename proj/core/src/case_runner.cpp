// Case driver: builds the mesh or hierarchy for a case, integrates it,
// records diagnostics and writes CSV / VTK / report files.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numbers>
#include <ostream>
#include <sstream>

#include "amrlab/cases.hpp"
#include "amrlab/dg_core.hpp"
#include "amrlab/errors.hpp"
#include "amrlab/patch_amr.hpp"

namespace amrlab {

namespace {

constexpr double kPi = std::numbers::pi;

using Clock = std::chrono::steady_clock;

void check_finite(std::span<const double> q, long step) {
  for (double x : q)
    if (!std::isfinite(x))
      throw NumericalError("non-finite value in the state after step " + std::to_string(step));
}

std::ofstream open_out(const std::string& dir, const std::string& name) {
  std::ofstream f(std::filesystem::path(dir) / name);
  if (!f) throw std::runtime_error("cannot write " + (std::filesystem::path(dir) / name).string());
  f.imbue(std::locale::classic());
  f.precision(12);
  return f;
}

/// Per-case hooks shared by both backends. Values are perturbation states
/// (Euler) or tracer mixing ratios (advection), one entry per variable.
struct CaseFields {
  int nvars = 1;
  std::vector<std::string> names;
  std::function<void(const Vec3& p, double* q)> init;
  std::function<double(const double* q, const Vec3& p)> indicator;
  std::function<BackgroundSample(const Vec3& p)> background;  // Euler cases only
};

CaseFields make_fields(const CaseConfig& cfg) {
  CaseFields f;
  const PhysicalConstants c = cfg.constants;
  switch (cfg.id) {
    case CaseId::kVortex:
      f.nvars = kEulerVars;
      f.names = {"rho_prime", "rho_u", "rho_v", "Theta_prime", "tracer"};
      f.background = [](const Vec3&) { return BackgroundSample{1.0, 1.0, 1.0}; };
      f.init = [cfg](const Vec3& p, double* q) {
        const auto s = isentropic_vortex(p.x, p.y, 0.0, cfg);
        q[kRho] = s.rho - 1.0;
        q[kMomX] = s.rho * s.u;
        q[kMomY] = s.rho * s.v;
        q[kTheta] = s.rho * s.theta - 1.0;
        q[kTracer] = s.rho;
      };
      f.indicator = [](const double* q, const Vec3&) {
        const double rho = 1.0 + q[kRho];
        return std::hypot(q[kMomX] / rho - 1.0, q[kMomY] / rho - 1.0);
      };
      break;
    case CaseId::kRrtb:
      f.nvars = kEulerVars;
      f.names = {"rho_prime", "rho_u", "rho_w", "Theta_prime", "tracer"};
      f.background = [c](const Vec3& p) { return hydrostatic_sample(300.0, c, p.y); };
      f.init = [c](const Vec3& p, double* q) {
        const BackgroundSample bg = hydrostatic_sample(300.0, c, p.y);
        const double tp = rrtb_theta_perturbation(p.x, p.y);
        // Pressure stays hydrostatic, so Theta = Theta_bar and rho adjusts.
        const double rho = bg.theta_density / (300.0 + tp);
        q[kRho] = rho - bg.rho;
        q[kMomX] = 0.0;
        q[kMomY] = 0.0;
        q[kTheta] = 0.0;
        q[kTracer] = rho * tp / 0.5;
      };
      f.indicator = [c](const double* q, const Vec3& p) {
        const BackgroundSample bg = hydrostatic_sample(300.0, c, p.y);
        return (bg.theta_density + q[kTheta]) / (bg.rho + q[kRho]) - 300.0;
      };
      break;
    case CaseId::kSwirl:
      f.names = {"tracer"};
      f.init = [cfg](const Vec3& p, double* q) {
        q[0] = cosine_bell(std::hypot(p.x - 0.25, p.y - 0.25), 0.25, cfg.hmax);
      };
      f.indicator = [](const double* q, const Vec3&) { return q[0]; };
      break;
    case CaseId::kSphereAdvect: {
      f.names = {"tracer"};
      const double r = cfg.constants.r_earth;
      f.init = [r, h = cfg.hmax](const Vec3& p, double* q) { q[0] = sphere_tracer(p, r, h); };
      f.indicator = [](const double* q, const Vec3&) { return q[0]; };
      break;
    }
  }
  return f;
}

/// Wind modes of the advection cases: the sphere wind split into fixed
/// spatial fields with time-dependent coefficients.
std::vector<WindMode> make_wind_modes(const CaseConfig& cfg) {
  const double T = cfg.period;
  if (cfg.id == CaseId::kSwirl) {
    return {{[](const Vec3& p) {
               const double sx = std::sin(kPi * p.x), sy = std::sin(kPi * p.y);
               return Vec3{sx * sx * std::sin(2.0 * kPi * p.y), -sy * sy * std::sin(2.0 * kPi * p.x),
                           0.0};
             },
             [T](double t) { return std::cos(kPi * t / T); }}};
  }
  const double r = cfg.constants.r_earth;
  const double k = 10.0 * r / T, w = 2.0 * kPi / T;
  auto tangent = [](double ue, double vn, const LatLon& ll) {
    return east_vector(ll.lon, ll.lat) * ue + north_vector(ll.lon, ll.lat) * vn;
  };
  std::vector<WindMode> modes;
  modes.push_back({[tangent](const Vec3& p) {
                     const LatLon ll = to_latlon(p);
                     return tangent(0.5 * std::sin(2.0 * ll.lat), 0.0, ll);
                   },
                   [k, T](double t) { return k * std::cos(kPi * t / T); }});
  modes.push_back({[tangent](const Vec3& p) {
                     const LatLon ll = to_latlon(p);
                     return tangent(-0.5 * std::sin(2.0 * ll.lat) * std::cos(2.0 * ll.lon),
                                    std::cos(ll.lat) * std::sin(2.0 * ll.lon), ll);
                   },
                   [k, T, w](double t) { return k * std::cos(kPi * t / T) * std::cos(2.0 * w * t); }});
  modes.push_back({[tangent](const Vec3& p) {
                     const LatLon ll = to_latlon(p);
                     return tangent(-0.5 * std::sin(2.0 * ll.lat) * std::sin(2.0 * ll.lon),
                                    -std::cos(ll.lat) * std::cos(2.0 * ll.lon), ll);
                   },
                   [k, T, w](double t) { return k * std::cos(kPi * t / T) * std::sin(2.0 * w * t); }});
  modes.push_back({[tangent](const Vec3& p) { return tangent(std::cos(to_latlon(p).lat), 0.0, to_latlon(p)); },
                   [r, T](double) { return 2.0 * kPi * r / T; }});
  return modes;
}

class Recorder {
 public:
  Recorder(const CaseConfig& cfg, const RunOptions& opts, CaseResult& res)
      : cfg_(cfg), opts_(opts), res_(res) {}

  void add(long step, double t, std::vector<long> cells, double mass, double energy,
           double tracer, double volume) {
    if (!res_.diag.empty() && res_.diag.back().step == step) return;
    if (res_.diag.empty()) {
      mass0_ = mass;
      energy0_ = energy;
      tracer0_ = tracer;
      volume0_ = volume;
    }
    DiagRow row;
    row.step = step;
    row.time = t;
    row.cells = std::move(cells);
    row.mass_loss = relative_loss(mass, mass0_);
    row.energy_loss = relative_loss(energy, energy0_);
    row.tracer_loss = relative_loss(tracer, tracer0_);
    row.volume_loss = relative_loss(volume, volume0_);
    res_.max_mass_loss = std::max(res_.max_mass_loss, row.mass_loss);
    res_.max_energy_loss = std::max(res_.max_energy_loss, row.energy_loss);
    res_.max_tracer_loss = std::max(res_.max_tracer_loss, row.tracer_loss);
    res_.max_volume_loss = std::max(res_.max_volume_loss, row.volume_loss);
    long total = 0;
    for (long n : row.cells) total += n;
    if (total > res_.peak_cells) {
      res_.peak_cells = total;
      res_.peak_cells_time = t;
    }
    if (opts_.verbose && opts_.log) {
      *opts_.log << "step " << step << " t=" << t << " cells=" << total
                 << " mass_loss=" << row.mass_loss << " tracer_loss=" << row.tracer_loss << "\n";
    }
    res_.diag.push_back(std::move(row));
  }

  bool diag_due(long step) const { return cfg_.diag_every > 0 && step % cfg_.diag_every == 0; }
  bool snap_due(long step, long nsteps) const {
    if (opts_.out_dir.empty() || !cfg_.write_vtk) return false;
    if (step == 0 || step == nsteps) return true;
    return cfg_.output_every > 0 && step % cfg_.output_every == 0;
  }

 private:
  const CaseConfig& cfg_;
  const RunOptions& opts_;
  CaseResult& res_;
  double mass0_ = 0.0, energy0_ = 0.0, tracer0_ = 0.0, volume0_ = 0.0;
};

// ---------------------------------------------------------------------------
// Tree backend

template <class Phys>
class TreeRunner {
 public:
  TreeRunner(const CaseConfig& cfg, const RunOptions& opts, CaseResult& res, Phys phys)
      : cfg_(cfg),
        opts_(opts),
        res_(res),
        fields_(make_fields(cfg)),
        nv_(fields_.nvars),
        ops_(build_mortar_operators(cfg.order)),
        topo_(cfg.id == CaseId::kSphereAdvect ? ForestTopology::cubed_sphere(cfg.nx)
                                              : ForestTopology::box(cfg.nx, cfg.ny, cfg.periodic,
                                                                    cfg.periodic)),
        forest_(topo_, cfg.policy.max_level),
        phys_(std::move(phys)) {
    if (cfg.id == CaseId::kSphereAdvect)
      map_ = std::make_unique<SphereMapping>(cfg.constants.r_earth);
    else
      map_ = std::make_unique<BoxMapping>(cfg.xlo, cfg.xhi, cfg.ylo, cfg.yhi);
  }

  void run() {
    Recorder rec(cfg_, opts_, res_);
    initialize();
    if (cfg_.id == CaseId::kRrtb) {
      background_mass_ = 0.0;
      const auto& bg = phys_bg();
      for (std::size_t g = 0; g < mesh_.num_nodes(); ++g)
        background_mass_ += mesh_.quad_weight[g] * bg[g].rho;
    }
    const long nsteps = cfg_.num_steps();
    const auto t_start = Clock::now();
    double t = 0.0;
    record(rec, 0, t);
    if (rec.snap_due(0, nsteps)) snapshot(0);

    StepWorkspace ws;
    std::vector<double> av_rhs;
    const RhsFn rhs = [&](double tt, std::span<const double> q, std::span<double> out) {
      phys_.set_time(tt);
      strong_form_rhs(mesh_, ops_, phys_, cfg_.flux, q, out);
      if (cfg_.viscosity > 0.0)
        apply_artificial_viscosity(mesh_, ops_, q, nv_, {kMomX, kMomY, kTheta}, cfg_.viscosity,
                                   out);
    };
    for (long step = 1; step <= nsteps; ++step) {
      if (cfg_.integrator == Integrator::kForwardEuler)
        step_forward_euler(rhs, t, cfg_.dt, q_, ws);
      else
        step_ssprk3(rhs, t, cfg_.dt, q_, ws);
      t = step * cfg_.dt;
      check_finite(q_, step);
      bool regridded = false;
      if (cfg_.policy.max_level > 0 && step % cfg_.policy.interval_steps == 0) {
        regrid_event();
        regridded = true;
      }
      if (regridded || rec.diag_due(step) || step == nsteps) record(rec, step, t);
      if (rec.snap_due(step, nsteps)) snapshot(step);
    }
    res_.steps = nsteps;
    res_.wall_seconds = std::chrono::duration<double>(Clock::now() - t_start).count();
    if (transfer_) {
      res_.transfer_mismatch = transfer_->max_mismatch();
      res_.rescale_fallbacks = transfer_->fallbacks();
    }
    errors(t);
  }

 private:
  const std::vector<BackgroundSample>& phys_bg() const {
    if constexpr (std::is_same_v<Phys, EulerPhysics>) return phys_.background();
    static const std::vector<BackgroundSample> none;
    return none;
  }

  void rebuild() {
    mesh_ = build_dg_mesh(forest_, *map_, ops_.basis);
    phys_.bind(mesh_);
  }

  void gather(std::size_t e, int n, double* out) const {
    const std::size_t nn = mesh_.nodes_per_element();
    for (int v = 0; v < nv_; ++v) out[v] = q_[(e * nv_ + v) * nn + n];
  }

  void fill_initial() {
    const std::size_t nn = mesh_.nodes_per_element();
    q_.assign(mesh_.nelem * nv_ * nn, 0.0);
    std::vector<double> tmp(nv_);
    for (std::size_t e = 0; e < mesh_.nelem; ++e)
      for (std::size_t n = 0; n < nn; ++n) {
        fields_.init(mesh_.points[e * nn + n], tmp.data());
        for (int v = 0; v < nv_; ++v) q_[(e * nv_ + v) * nn + n] = tmp[v];
      }
  }

  std::vector<double> leaf_indicator() const {
    const std::size_t nn = mesh_.nodes_per_element();
    std::vector<double> ind(mesh_.nelem, -1e300), tmp(nv_);
    for (std::size_t e = 0; e < mesh_.nelem; ++e)
      for (std::size_t n = 0; n < nn; ++n) {
        gather(e, int(n), tmp.data());
        ind[e] = std::max(ind[e], fields_.indicator(tmp.data(), mesh_.points[e * nn + n]));
      }
    return ind;
  }

  DGLeafTransfer& transfer() {
    if (!transfer_) {
      DGLeafTransfer::WeightFn weights;
      if (map_->spherical()) {
        weights = [this](const CellKey& key) {
          const auto pts = element_points(topo_, *map_, key, ops_.basis);
          const MetricTerms m = compute_metrics(pts, ops_.basis);
          const int np = ops_.np();
          std::vector<double> w(std::size_t(np) * np);
          for (int j = 0; j < np; ++j)
            for (int i = 0; i < np; ++i)
              w[i + np * j] = ops_.basis.weights[i] * ops_.basis.weights[j] * m.jac[i + np * j];
          return w;
        };
      }
      transfer_ = std::make_unique<DGLeafTransfer>(ops_, nv_, weights, cfg_.rescale);
    }
    return *transfer_;
  }

  void initialize() {
    rebuild();
    fill_initial();
    for (int pass = 0; pass < cfg_.policy.max_level + 1 && cfg_.policy.max_level > 0; ++pass) {
      const auto ind = leaf_indicator();
      const auto out = regrid(forest_, ind, cfg_.policy, q_, transfer());
      if (!out.changed) break;
      rebuild();
      fill_initial();
    }
    volume0_ = mesh_volume();
    check_cfl();
  }

  void check_cfl() {
    const double bound = cfl_time_step(mesh_, phys_, q_, cfg_.cfl);
    res_.min_stable_dt = std::min(res_.min_stable_dt, bound);
    if (cfg_.dt > bound) ++res_.cfl_warnings;
  }

  void regrid_event() {
    bool any = false;
    for (int pass = 0; pass < cfg_.policy.max_level + 1; ++pass) {
      const auto ind = leaf_indicator();
      const auto out = regrid(forest_, ind, cfg_.policy, q_, transfer());
      if (!out.changed) break;
      any = true;
      rebuild();
    }
    ++res_.regrids;
    if (cfg_.id == CaseId::kRrtb || cfg_.id == CaseId::kVortex) {
      // Tagged features must sit on the finest level after the event.
      const auto ind = leaf_indicator();
      ++res_.tracking_checks;
      for (std::size_t e = 0; e < mesh_.nelem; ++e)
        if (ind[e] > cfg_.policy.refine_above && mesh_.keys[e].level < cfg_.policy.max_level) {
          ++res_.tracking_failures;
          break;
        }
    }
    if (any) check_cfl();
  }

  double mesh_volume() const {
    double v = 0.0;
    for (double a : mesh_.element_area) v += a;
    return v;
  }

  void record(Recorder& rec, long step, double t) {
    std::vector<long> cells;
    for (int n : forest_.leaves_per_level()) cells.push_back(n);
    double mass = 0.0, energy = 0.0, tracer = 0.0;
    if constexpr (std::is_same_v<Phys, EulerPhysics>) {
      const auto& bg = phys_.background();
      const std::size_t nn = mesh_.nodes_per_element();
      std::array<double, kEulerVars> qn{};
      for (std::size_t e = 0; e < mesh_.nelem; ++e)
        for (std::size_t n = 0; n < nn; ++n) {
          const std::size_t g = e * nn + n;
          gather(e, int(n), qn.data());
          const double w = mesh_.quad_weight[g];
          mass += w * qn[kRho];
          tracer += w * qn[kTracer];
          energy += w * energy_density(qn, bg[g], mesh_.points[g].y, cfg_.constants);
        }
      mass += background_mass_;
      if (cfg_.id == CaseId::kVortex) mass += mesh_volume();  // rho_bar = 1
    } else {
      tracer = integrate(mesh_, q_, nv_, 0);
      mass = tracer;
      energy = tracer;
    }
    rec.add(step, t, std::move(cells), mass, energy, tracer, mesh_volume());
  }

  void errors(double t) {
    const std::size_t nn = mesh_.nodes_per_element();
    std::vector<double> tmp(nv_), ex(nv_);
    if (cfg_.id == CaseId::kVortex) {
      std::vector<double> got, want;
      double max_err = 0.0, far = 0.0, l2 = 0.0;
      const double lx = cfg_.xhi - cfg_.xlo, ly = cfg_.yhi - cfg_.ylo;
      const double cx = std::remainder(t, lx), cy = std::remainder(t, ly);
      for (std::size_t e = 0; e < mesh_.nelem; ++e)
        for (std::size_t n = 0; n < nn; ++n) {
          const std::size_t g = e * nn + n;
          const Vec3& p = mesh_.points[g];
          gather(e, int(n), tmp.data());
          const auto s = isentropic_vortex(p.x, p.y, t, cfg_);
          ex = {s.rho - 1.0, s.rho * s.u, s.rho * s.v, s.rho * s.theta - 1.0};
          for (int v = 0; v < 4; ++v) {
            got.push_back(tmp[v]);
            want.push_back(ex[v]);
          }
          double d2 = 0.0;
          for (int v = 0; v < 4; ++v) d2 += (tmp[v] - ex[v]) * (tmp[v] - ex[v]);
          max_err = std::max(max_err, std::sqrt(d2));
          const double dx = std::remainder(p.x - cx, lx), dy = std::remainder(p.y - cy, ly);
          if (std::hypot(dx, dy) > 2.0) far = std::max(far, std::sqrt(d2));
          l2 += mesh_.quad_weight[g] * d2;
        }
      res_.l2_paper = l2_error_norm(got, want);
      res_.l2_integral = std::sqrt(l2);
      res_.max_error = max_err;
      res_.max_error_far = far;
    } else if ((cfg_.id == CaseId::kSwirl || cfg_.id == CaseId::kSphereAdvect) &&
               std::abs(t - cfg_.period) <= 1e-9 * cfg_.period) {
      double num = 0.0, den = 0.0, max_err = 0.0;
      for (std::size_t e = 0; e < mesh_.nelem; ++e)
        for (std::size_t n = 0; n < nn; ++n) {
          const std::size_t g = e * nn + n;
          fields_.init(mesh_.points[g], ex.data());
          const double d = q_[e * nn + n] - ex[0];
          num += mesh_.quad_weight[g] * d * d;
          den += mesh_.quad_weight[g] * ex[0] * ex[0];
          max_err = std::max(max_err, std::abs(d));
        }
      res_.l2_integral = std::sqrt(num / den);
      res_.max_error = max_err;
    }
  }

  void snapshot(long step) {
    auto f = open_out(opts_.out_dir, "snap_" + std::to_string(step) + ".vtk");
    const std::size_t ne = mesh_.nelem, nn = mesh_.nodes_per_element();
    f << "# vtk DataFile Version 3.0\nleaf cells, step " << step << "\nASCII\n"
      << "DATASET UNSTRUCTURED_GRID\nPOINTS " << 4 * ne << " double\n";
    for (std::size_t e = 0; e < ne; ++e)
      for (const Vec3& c : cell_corners(topo_, *map_, mesh_.keys[e]))
        f << c.x << ' ' << c.y << ' ' << c.z << '\n';
    f << "CELLS " << ne << ' ' << 5 * ne << '\n';
    for (std::size_t e = 0; e < ne; ++e)
      f << "4 " << 4 * e << ' ' << 4 * e + 1 << ' ' << 4 * e + 2 << ' ' << 4 * e + 3 << '\n';
    f << "CELL_TYPES " << ne << '\n';
    for (std::size_t e = 0; e < ne; ++e) f << "9\n";
    f << "CELL_DATA " << ne << "\nSCALARS level int 1\nLOOKUP_TABLE default\n";
    for (std::size_t e = 0; e < ne; ++e) f << mesh_.keys[e].level << '\n';
    for (int v = 0; v < nv_; ++v) {
      f << "SCALARS " << fields_.names[v] << " double 1\nLOOKUP_TABLE default\n";
      for (std::size_t e = 0; e < ne; ++e) {
        double s = 0.0, w = 0.0;
        for (std::size_t n = 0; n < nn; ++n) {
          s += mesh_.quad_weight[e * nn + n] * q_[(e * nv_ + v) * nn + n];
          w += mesh_.quad_weight[e * nn + n];
        }
        f << s / w << '\n';
      }
    }
  }

  const CaseConfig& cfg_;
  const RunOptions& opts_;
  CaseResult& res_;
  CaseFields fields_;
  int nv_;
  MortarOperators ops_;
  ForestTopology topo_;
  std::unique_ptr<TileMapping> map_;
  QuadForest forest_;
  Phys phys_;
  DGMesh mesh_;
  std::vector<double> q_;
  std::unique_ptr<DGLeafTransfer> transfer_;
  double background_mass_ = 0.0;
  double volume0_ = 0.0;
};

// ---------------------------------------------------------------------------
// Patch backend

class PatchRunner {
 public:
  PatchRunner(const CaseConfig& cfg, const RunOptions& opts, CaseResult& res)
      : cfg_(cfg), opts_(opts), res_(res), fields_(make_fields(cfg)) {
    PatchConfig pc;
    pc.domain = {cfg.nx, cfg.ny, cfg.xlo, cfg.xhi, cfg.ylo, cfg.yhi,
                 cfg.periodic ? PatchBoundary::kPeriodic : PatchBoundary::kWall,
                 cfg.periodic ? PatchBoundary::kPeriodic : PatchBoundary::kWall};
    pc.max_level = cfg.policy.max_level;
    pc.cluster = {cfg.efficiency, cfg.blocking, cfg.max_grid_size};
    pc.policy = cfg.policy;
    pc.order = cfg.fv_order;
    pc.ghosts = 2;
    pc.reflux = cfg.reflux;
    pc.cfl_limit = cfg.cfl;
    std::shared_ptr<const FvPhysics> phys;
    if (fields_.nvars == 1) {
      const double T = cfg.period;
      phys = std::make_shared<FvAdvection>(
          [T](double x, double y, double t) { return swirl_wind(x, y, t, T); });
    } else {
      auto bgfn = fields_.background;
      phys = std::make_shared<FvEuler>(
          cfg.constants, [bgfn](double x, double y) { return bgfn(Vec3{x, y, 0.0}); });
    }
    try {
      hier_ = std::make_unique<PatchHierarchy>(pc, phys);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("patch backend: ") + e.what());
    }
  }

  void run() {
    Recorder rec(cfg_, opts_, res_);
    const auto init = [this](double x, double y, double* q) { fields_.init(Vec3{x, y, 0.0}, q); };
    const auto tag = [this](const double* q, double x, double y) {
      return fields_.indicator(q, Vec3{x, y, 0.0});
    };
    hier_->initialize(init, tag);
    res_.min_stable_dt = hier_->stable_dt(cfg_.cfl);
    const long nsteps = cfg_.num_steps();
    const auto t_start = Clock::now();
    record(rec, 0, 0.0);
    if (rec.snap_due(0, nsteps)) snapshot(0);
    for (long step = 1; step <= nsteps; ++step) {
      hier_->advance(cfg_.dt);
      const double t = step * cfg_.dt;
      if (step % 16 == 0 || step == nsteps) check_all(step);
      bool regridded = false;
      if (cfg_.policy.max_level > 0 && step % cfg_.policy.interval_steps == 0) {
        hier_->regrid(tag);
        ++res_.regrids;
        regridded = true;
        int boxes = 0;
        for (int l = 1; l < hier_->num_levels(); ++l) boxes += int(hier_->level(l).patches.size());
        res_.max_boxes = std::max(res_.max_boxes, boxes);
      }
      if (regridded || rec.diag_due(step) || step == nsteps) record(rec, step, t);
      if (rec.snap_due(step, nsteps)) snapshot(step);
    }
    res_.steps = nsteps;
    res_.wall_seconds = std::chrono::duration<double>(Clock::now() - t_start).count();
    res_.cfl_warnings = hier_->cfl_warnings();
    for (int l = 0; l < hier_->num_levels(); ++l)
      res_.boxes_per_level.push_back(int(hier_->level(l).patches.size()));
    int boxes = 0;
    for (int l = 1; l < hier_->num_levels(); ++l) boxes += res_.boxes_per_level[l];
    res_.max_boxes = std::max(res_.max_boxes, boxes);
    errors(nsteps * cfg_.dt);
  }

 private:
  void check_all(long step) const {
    for (int l = 0; l < hier_->num_levels(); ++l)
      for (const Patch& p : hier_->level(l).patches) check_finite(p.data, step);
  }

  void record(Recorder& rec, long step, double t) {
    double mass = 0.0, energy = 0.0, tracer = 0.0;
    if (fields_.nvars == 1) {
      tracer = mass = energy = hier_->integral(0);
    } else {
      tracer = hier_->integral(kTracer);
      for (int l = 0; l < hier_->num_levels(); ++l)
        hier_->for_each_leaf_cell(l, [&](double x, double y, const double* q, double vol) {
          const BackgroundSample bg = fields_.background(Vec3{x, y, 0.0});
          std::array<double, kEulerVars> qn;
          std::copy(q, q + kEulerVars, qn.begin());
          mass += vol * (bg.rho + q[kRho]);
          energy += vol * energy_density(qn, bg, y, cfg_.constants);
        });
    }
    const double volume = (cfg_.xhi - cfg_.xlo) * (cfg_.yhi - cfg_.ylo);
    rec.add(step, t, hier_->cells_per_level(), mass, energy, tracer, volume);
  }

  void errors(double t) {
    const int nv = fields_.nvars;
    std::vector<double> ex(nv);
    if (cfg_.id == CaseId::kVortex) {
      std::vector<double> got, want;
      double max_err = 0.0, far = 0.0, l2 = 0.0;
      const double lx = cfg_.xhi - cfg_.xlo, ly = cfg_.yhi - cfg_.ylo;
      for (int l = 0; l < hier_->num_levels(); ++l)
        hier_->for_each_leaf_cell(l, [&](double x, double y, const double* q, double vol) {
          const auto s = isentropic_vortex(x, y, t, cfg_);
          const double e4[4] = {s.rho - 1.0, s.rho * s.u, s.rho * s.v, s.rho * s.theta - 1.0};
          for (int v = 0; v < 4; ++v) {
            got.push_back(q[v]);
            want.push_back(e4[v]);
          }
          double d2 = 0.0;
          for (int v = 0; v < 4; ++v) d2 += (q[v] - e4[v]) * (q[v] - e4[v]);
          max_err = std::max(max_err, std::sqrt(d2));
          if (std::hypot(std::remainder(x - t, lx), std::remainder(y - t, ly)) > 2.0)
            far = std::max(far, std::sqrt(d2));
          l2 += vol * d2;
        });
      res_.l2_paper = l2_error_norm(got, want);
      res_.l2_integral = std::sqrt(l2);
      res_.max_error = max_err;
      res_.max_error_far = far;
    } else if (cfg_.id == CaseId::kSwirl && std::abs(t - cfg_.period) <= 1e-9 * cfg_.period) {
      double num = 0.0, den = 0.0, max_err = 0.0;
      for (int l = 0; l < hier_->num_levels(); ++l)
        hier_->for_each_leaf_cell(l, [&](double x, double y, const double* q, double vol) {
          fields_.init(Vec3{x, y, 0.0}, ex.data());
          num += vol * (q[0] - ex[0]) * (q[0] - ex[0]);
          den += vol * ex[0] * ex[0];
          max_err = std::max(max_err, std::abs(q[0] - ex[0]));
        });
      res_.l2_integral = std::sqrt(num / den);
      res_.max_error = max_err;
    }
  }

  void snapshot(long step) {
    const std::string stem = "snap_" + std::to_string(step);
    auto manifest = open_out(opts_.out_dir, stem + ".manifest");
    for (int l = 0; l < hier_->num_levels(); ++l) {
      const PatchLevel& lev = hier_->level(l);
      const std::string name = stem + "_L" + std::to_string(l) + ".vtk";
      manifest << name << '\n';
      auto f = open_out(opts_.out_dir, name);
      const LevelGeometry& g = lev.geo;
      f << "# vtk DataFile Version 3.0\nlevel " << l << ", step " << step << "\nASCII\n"
        << "DATASET RECTILINEAR_GRID\nDIMENSIONS " << g.nx + 1 << ' ' << g.ny + 1 << " 1\n";
      f << "X_COORDINATES " << g.nx + 1 << " double\n";
      for (int i = 0; i <= g.nx; ++i) f << g.xlo + i * g.dx << '\n';
      f << "Y_COORDINATES " << g.ny + 1 << " double\n";
      for (int j = 0; j <= g.ny; ++j) f << g.ylo + j * g.dy << '\n';
      f << "Z_COORDINATES 1 double\n0\n";
      const std::size_t nc = std::size_t(g.nx) * g.ny;
      f << "CELL_DATA " << nc << "\nSCALARS covered int 1\nLOOKUP_TABLE default\n";
      for (std::size_t c = 0; c < nc; ++c)
        f << (lev.owner[c] < 0 ? -1 : (!lev.covered.empty() && lev.covered[c] ? 1 : 0)) << '\n';
      for (int v = 0; v < fields_.nvars; ++v) {
        f << "SCALARS " << fields_.names[v] << " double 1\nLOOKUP_TABLE default\n";
        for (int j = 0; j < g.ny; ++j)
          for (int i = 0; i < g.nx; ++i) {
            const int o = lev.owner[std::size_t(j) * g.nx + i];
            f << (o < 0 ? 0.0 : lev.patches[o].at(v, i, j)) << '\n';
          }
      }
    }
  }

  const CaseConfig& cfg_;
  const RunOptions& opts_;
  CaseResult& res_;
  CaseFields fields_;
  std::unique_ptr<PatchHierarchy> hier_;
};

}  // namespace

CaseResult run_case(const CaseConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  if (!opts.out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(opts.out_dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + opts.out_dir + ": " + ec.message());
  }
  CaseResult res;
  if (cfg.backend == Backend::kPatch) {
    PatchRunner(cfg, opts, res).run();
  } else if (cfg.id == CaseId::kVortex || cfg.id == CaseId::kRrtb) {
    const auto bg = make_fields(cfg).background;
    TreeRunner<EulerPhysics>(cfg, opts, res, EulerPhysics(cfg.constants, bg)).run();
  } else {
    TreeRunner<AdvectionPhysics>(cfg, opts, res, AdvectionPhysics(make_wind_modes(cfg))).run();
  }
  if (!opts.out_dir.empty()) {
    auto csv = open_out(opts.out_dir, "diag.csv");
    write_diag_csv(csv, res.diag);
    auto rep = open_out(opts.out_dir, "report.txt");
    write_report(rep, cfg, res);
  }
  return res;
}

}  // namespace amrlab
