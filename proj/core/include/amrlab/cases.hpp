#pragma once

// Benchmark cases, error norms, diagnostics and the case driver shared by
// the CLI and the acceptance suite.

#include <array>
#include <cmath>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "amrlab/euler_model.hpp"
#include "amrlab/mortar_transfer.hpp"
#include "amrlab/sphere_geometry.hpp"
#include "amrlab/tree_mesh.hpp"

namespace amrlab {

enum class CaseId { kVortex, kSwirl, kRrtb, kSphereAdvect };
enum class Backend { kTree, kPatch };
enum class Integrator { kForwardEuler, kSspRk3 };

const char* to_string(CaseId id);
const char* to_string(Backend b);
const char* to_string(Integrator i);
/// Throw ConfigError on unknown names.
CaseId case_from_string(const std::string& s);
Backend backend_from_string(const std::string& s);
Integrator integrator_from_string(const std::string& s);

struct CaseConfig {
  CaseId id = CaseId::kSwirl;
  Backend backend = Backend::kTree;
  FluxMode flux = FluxMode::kMortar;

  double xlo = 0.0, xhi = 1.0, ylo = 0.0, yhi = 1.0;  // planar domain
  bool periodic = false;                              // else no-flux walls
  int nx = 16, ny = 16;  // root elements / level-0 cells; sphere: per tile edge
  int order = 4;         // dG polynomial order

  double dt = 1.25e-3;
  double end_time = 5.0;
  Integrator integrator = Integrator::kSspRk3;
  double cfl = 1.0;  // only used for the CFL warning

  RegridPolicy policy;  // max_level = 0 disables adaptation

  // Patch backend.
  double efficiency = 0.7;
  int blocking = 4;
  int max_grid_size = 64;
  int fv_order = 3;
  bool reflux = true;

  double viscosity = 0.0;  // artificial viscosity mu
  double hmax = 1.0;       // cosine-bell height
  double period = 5.0;     // reversing-flow period of the advection cases
  PhysicalConstants constants;
  RescaleMode rescale = RescaleMode::kPerField;

  int output_every = 0;  // snapshot cadence in steps; 0 = first and last only
  int diag_every = 0;    // diagnostics cadence in steps; 0 = at regrids and the end
  bool write_vtk = true;

  long num_steps() const { return std::lround(end_time / dt); }
  /// Throws ConfigError with an actionable message.
  void validate() const;
};

/// Published setup of each case.
CaseConfig default_config(CaseId id);

/// Apply `key = value` lines ('#' starts a comment). Unknown keys, bad
/// values and duplicate keys throw ConfigError naming the line.
void apply_config_text(CaseConfig& cfg, const std::string& text);
std::string config_keys_help();

// ---------------------------------------------------------------------------
// Case fields

/// Isentropic vortex in nondimensional units: (rho, u, v, theta, p).
struct VortexSample {
  double rho, u, v, theta, p;
};
VortexSample isentropic_vortex(double x, double y, double t, const CaseConfig& cfg);

/// Swirling deformation wind on [0,1]^2 with period `period`.
Vec3 swirl_wind(double x, double y, double t, double period);
double cosine_bell(double r, double radius, double hmax);

/// Potential-temperature perturbation of the rising bubble.
double rrtb_theta_perturbation(double x, double z);

/// Deformational wind on the sphere (u east, v north) and its Cartesian form.
std::array<double, 2> sphere_wind(double lon, double lat, double t, double period, double radius);
Vec3 sphere_wind_cartesian(const Vec3& p, double t, double period, double radius);
double sphere_tracer(const Vec3& p, double radius, double hmax);

/// (1 / N_dof) sqrt(sum |q - q_exact|^2) with one entry per dof.
double l2_error_norm(const std::vector<double>& q, const std::vector<double>& exact);

// ---------------------------------------------------------------------------
// Driver

struct DiagRow {
  long step = 0;
  double time = 0.0;
  std::vector<long> cells;  // per level
  double mass_loss = 0.0, energy_loss = 0.0, tracer_loss = 0.0, volume_loss = 0.0;
};

struct CaseResult {
  std::vector<DiagRow> diag;
  long steps = 0;
  int regrids = 0;
  double wall_seconds = 0.0;
  double max_mass_loss = 0.0, max_energy_loss = 0.0, max_tracer_loss = 0.0,
         max_volume_loss = 0.0;

  double l2_paper = NAN;         // vortex: paper norm over (rho, U, V, Theta)
  // Integral L2 error: vortex sqrt(int |dq|^2) over (rho', U, V, Theta');
  // advection cases relative to the exact tracer norm.
  double l2_integral = NAN;
  double max_error = NAN;        // max pointwise error (vortex: |dq| over the same fields)
  double max_error_far = NAN;    // vortex: outside 2 units of the exact center
  int tracking_failures = 0;     // rrtb: tagged leaves below max_level after regrid
  int tracking_checks = 0;
  double transfer_mismatch = 0.0;  // sphere: largest pre-rescale relative mismatch
  int rescale_fallbacks = 0;
  int cfl_warnings = 0;
  double min_stable_dt = INFINITY;  // smallest CFL-bound step seen on any mesh
  std::vector<int> boxes_per_level;  // patch backend, at the end
  int max_boxes = 0;                 // patch backend, over the run
  long peak_cells = 0;
  double peak_cells_time = 0.0;
};

struct RunOptions {
  std::string out_dir;  // empty: no files
  bool verbose = false;
  std::ostream* log = nullptr;
};

/// Deterministic given the config. Throws ConfigError or NumericalError.
CaseResult run_case(const CaseConfig& cfg, const RunOptions& opts = {});

void write_diag_csv(std::ostream& os, const std::vector<DiagRow>& rows);
void write_report(std::ostream& os, const CaseConfig& cfg, const CaseResult& r);

}  // namespace amrlab
