#include "amrlab/cases.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

#include "amrlab/errors.hpp"

namespace amrlab {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSecondsPerDay = 86400.0;

// Rising bubble parameters.
constexpr double kBubbleTheta0 = 300.0;
constexpr double kBubbleAmplitude = 0.5;
constexpr double kBubbleX = 500.0, kBubbleZ = 350.0, kBubbleRadius = 250.0;

// Vortex parameters.
constexpr double kVortexBeta = 5.0;
constexpr double kVortexU = 1.0, kVortexV = 1.0;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || !std::isfinite(x)) throw ConfigError("expected a number, got '" + v + "'");
  return x;
}

int parse_int(const std::string& v) {
  char* end = nullptr;
  const long x = std::strtol(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || x < -1000000000L || x > 1000000000L)
    throw ConfigError("expected an integer, got '" + v + "'");
  return int(x);
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

using Setter = void (*)(CaseConfig&, const std::string&);

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"case",
       [](CaseConfig& c, const std::string& v) {
         if (case_from_string(v) != c.id)
           throw ConfigError(std::string("file is for case '") + v + "' but the run requested '" +
                             to_string(c.id) + "'");
       }},
      {"backend", [](CaseConfig& c, const std::string& v) { c.backend = backend_from_string(v); }},
      {"flux",
       [](CaseConfig& c, const std::string& v) {
         try {
           c.flux = flux_mode_from_string(v);
         } catch (const std::exception&) {
           throw ConfigError("unknown flux mode '" + v + "' (mortar, pointwise, linearized)");
         }
       }},
      {"xlo", [](CaseConfig& c, const std::string& v) { c.xlo = parse_double(v); }},
      {"xhi", [](CaseConfig& c, const std::string& v) { c.xhi = parse_double(v); }},
      {"ylo", [](CaseConfig& c, const std::string& v) { c.ylo = parse_double(v); }},
      {"yhi", [](CaseConfig& c, const std::string& v) { c.yhi = parse_double(v); }},
      {"periodic", [](CaseConfig& c, const std::string& v) { c.periodic = parse_bool(v); }},
      {"nx", [](CaseConfig& c, const std::string& v) { c.nx = parse_int(v); }},
      {"ny", [](CaseConfig& c, const std::string& v) { c.ny = parse_int(v); }},
      {"order", [](CaseConfig& c, const std::string& v) { c.order = parse_int(v); }},
      {"dt", [](CaseConfig& c, const std::string& v) { c.dt = parse_double(v); }},
      {"end_time", [](CaseConfig& c, const std::string& v) { c.end_time = parse_double(v); }},
      {"integrator",
       [](CaseConfig& c, const std::string& v) { c.integrator = integrator_from_string(v); }},
      {"cfl", [](CaseConfig& c, const std::string& v) { c.cfl = parse_double(v); }},
      {"regrid_interval",
       [](CaseConfig& c, const std::string& v) { c.policy.interval_steps = parse_int(v); }},
      {"buffer", [](CaseConfig& c, const std::string& v) { c.policy.buffer_cells = parse_int(v); }},
      {"buffer_metric",
       [](CaseConfig& c, const std::string& v) {
         if (v == "square") c.policy.metric = BufferMetric::kSquare;
         else if (v == "face") c.policy.metric = BufferMetric::kFace;
         else throw ConfigError("buffer_metric must be square or face, got '" + v + "'");
       }},
      {"max_level", [](CaseConfig& c, const std::string& v) { c.policy.max_level = parse_int(v); }},
      {"refine_above",
       [](CaseConfig& c, const std::string& v) { c.policy.refine_above = parse_double(v); }},
      {"coarsen_below",
       [](CaseConfig& c, const std::string& v) { c.policy.coarsen_below = parse_double(v); }},
      {"efficiency", [](CaseConfig& c, const std::string& v) { c.efficiency = parse_double(v); }},
      {"blocking", [](CaseConfig& c, const std::string& v) { c.blocking = parse_int(v); }},
      {"max_grid_size", [](CaseConfig& c, const std::string& v) { c.max_grid_size = parse_int(v); }},
      {"fv_order", [](CaseConfig& c, const std::string& v) { c.fv_order = parse_int(v); }},
      {"reflux", [](CaseConfig& c, const std::string& v) { c.reflux = parse_bool(v); }},
      {"viscosity", [](CaseConfig& c, const std::string& v) { c.viscosity = parse_double(v); }},
      {"hmax", [](CaseConfig& c, const std::string& v) { c.hmax = parse_double(v); }},
      {"period", [](CaseConfig& c, const std::string& v) { c.period = parse_double(v); }},
      {"rescale",
       [](CaseConfig& c, const std::string& v) {
         if (v == "per-field") c.rescale = RescaleMode::kPerField;
         else if (v == "single-factor") c.rescale = RescaleMode::kSingleFactor;
         else throw ConfigError("rescale must be per-field or single-factor, got '" + v + "'");
       }},
      {"output_every", [](CaseConfig& c, const std::string& v) { c.output_every = parse_int(v); }},
      {"diag_every", [](CaseConfig& c, const std::string& v) { c.diag_every = parse_int(v); }},
      {"vtk", [](CaseConfig& c, const std::string& v) { c.write_vtk = parse_bool(v); }},
      {"p0", [](CaseConfig& c, const std::string& v) { c.constants.p0 = parse_double(v); }},
      {"R", [](CaseConfig& c, const std::string& v) { c.constants.R = parse_double(v); }},
      {"cp", [](CaseConfig& c, const std::string& v) { c.constants.cp = parse_double(v); }},
      {"cv", [](CaseConfig& c, const std::string& v) { c.constants.cv = parse_double(v); }},
      {"g", [](CaseConfig& c, const std::string& v) { c.constants.g = parse_double(v); }},
      {"r_earth", [](CaseConfig& c, const std::string& v) { c.constants.r_earth = parse_double(v); }},
  };
  return table;
}

}  // namespace

const char* to_string(CaseId id) {
  switch (id) {
    case CaseId::kVortex: return "vortex";
    case CaseId::kSwirl: return "swirl";
    case CaseId::kRrtb: return "rrtb";
    default: return "sphere-advect";
  }
}

const char* to_string(Backend b) { return b == Backend::kTree ? "tree" : "patch"; }
const char* to_string(Integrator i) {
  return i == Integrator::kForwardEuler ? "forward-euler" : "ssprk3";
}

CaseId case_from_string(const std::string& s) {
  if (s == "vortex") return CaseId::kVortex;
  if (s == "swirl") return CaseId::kSwirl;
  if (s == "rrtb") return CaseId::kRrtb;
  if (s == "sphere-advect") return CaseId::kSphereAdvect;
  throw ConfigError("unknown case '" + s + "' (vortex, swirl, rrtb, sphere-advect)");
}

Backend backend_from_string(const std::string& s) {
  if (s == "tree") return Backend::kTree;
  if (s == "patch") return Backend::kPatch;
  throw ConfigError("unknown backend '" + s + "' (tree, patch)");
}

Integrator integrator_from_string(const std::string& s) {
  if (s == "forward-euler") return Integrator::kForwardEuler;
  if (s == "ssprk3") return Integrator::kSspRk3;
  throw ConfigError("unknown integrator '" + s + "' (forward-euler, ssprk3)");
}

CaseConfig default_config(CaseId id) {
  CaseConfig c;
  c.id = id;
  switch (id) {
    case CaseId::kVortex:
      c.xlo = c.ylo = -6.0;
      c.xhi = c.yhi = 6.0;
      c.periodic = true;
      c.nx = c.ny = 32;
      c.order = 3;
      c.dt = 2.5e-4;
      c.end_time = 3.0;
      c.integrator = Integrator::kForwardEuler;
      c.policy = {100, 2, 1, 0.1, 0.05, BufferMetric::kSquare};
      c.constants = PhysicalConstants::nondimensional();
      c.efficiency = 0.7;
      c.blocking = 4;
      break;
    case CaseId::kSwirl:
      c.policy = {50, 2, 1, 0.05, 0.02, BufferMetric::kSquare};
      c.period = 5.0;
      break;
    case CaseId::kRrtb:
      c.xhi = c.yhi = 1000.0;
      c.nx = c.ny = 10;
      c.order = 4;
      c.dt = 0.004;
      c.end_time = 600.0;
      c.policy = {6250, 2, 2, 0.05, 0.02, BufferMetric::kSquare};  // every 25 s
      c.viscosity = 1.5;
      c.blocking = 2;
      break;
    case CaseId::kSphereAdvect:
      c.nx = c.ny = 30;
      c.order = 4;
      c.period = 12.0 * kSecondsPerDay;
      c.end_time = c.period;
      c.dt = 48.0;  // CFL bound on the refined level is about 53 s
      c.policy = {60, 4, 1, 0.05, 0.02, BufferMetric::kSquare};  // every 48 min
      break;
  }
  return c;
}

void CaseConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (!(dt > 0.0)) fail("dt must be positive");
  if (!(end_time >= 0.0)) fail("end_time must be non-negative");
  if (std::abs(num_steps() * dt - end_time) > 1e-9 * std::max(1.0, end_time))
    fail("end_time must be a whole number of dt steps");
  if (nx < 1 || ny < 1) fail("nx and ny must be at least 1");
  if (!(cfl > 0.0)) fail("cfl must be positive");
  if (policy.interval_steps < 1) fail("regrid_interval must be at least 1");
  if (policy.buffer_cells < 0) fail("buffer must be non-negative");
  if (policy.max_level < 0 || policy.max_level > 8) fail("max_level must be in [0, 8]");
  if (policy.coarsen_below > policy.refine_above)
    fail("coarsen_below must not exceed refine_above");
  if (viscosity < 0.0) fail("viscosity must be non-negative");
  if (output_every < 0 || diag_every < 0) fail("output_every and diag_every must be >= 0");
  if (id == CaseId::kSphereAdvect) {
    if (backend == Backend::kPatch)
      fail("the patch backend covers planar domains only; use backend = tree for sphere-advect");
    if (nx != ny) fail("sphere-advect needs nx == ny (cells per tile edge)");
  } else if (!(xhi > xlo) || !(yhi > ylo)) {
    fail("domain extents must satisfy xlo < xhi and ylo < yhi");
  }
  if ((id == CaseId::kSwirl || id == CaseId::kSphereAdvect) && !(period > 0.0))
    fail("period must be positive");
  if (id == CaseId::kVortex || id == CaseId::kRrtb) {
    try {
      constants.validate();
    } catch (const std::exception& e) {
      fail(std::string("physical constants: ") + e.what());
    }
  }
  if (backend == Backend::kTree) {
    if (order < 1 || order > 7) fail("order must be in [1, 7] for the tree backend");
    if (flux == FluxMode::kLinearized && (id == CaseId::kVortex || id == CaseId::kRrtb))
      fail("flux = linearized is only defined for the advection cases");
  } else {
    if (fv_order < 2 || fv_order > 4) fail("fv_order must be 2, 3 or 4");
    if (efficiency <= 0.0 || efficiency > 1.0) fail("efficiency must be in (0, 1]");
    if (blocking < 2 || blocking % 2) fail("blocking must be an even number >= 2");
    if (max_grid_size < blocking || max_grid_size % blocking)
      fail("max_grid_size must be a positive multiple of blocking");
    if (policy.max_level > 0 && ((2 * nx) % blocking || (2 * ny) % blocking))
      fail("2 nx and 2 ny must be multiples of blocking for the patch backend");
    if (viscosity > 0.0) fail("viscosity is not supported by the patch backend; set viscosity = 0");
    if (flux != FluxMode::kMortar) fail("flux modes other than mortar apply to the tree backend");
  }
}

void apply_config_text(CaseConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(lineno) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      it->second(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
}

std::string config_keys_help() {
  std::string s;
  for (const auto& [k, _] : setters()) s += k + "\n";
  return s;
}

// ---------------------------------------------------------------------------

VortexSample isentropic_vortex(double x, double y, double t, const CaseConfig& cfg) {
  const double gamma = cfg.constants.gamma();
  const double lx = cfg.xhi - cfg.xlo, ly = cfg.yhi - cfg.ylo;
  double dx = x - kVortexU * t, dy = y - kVortexV * t;  // center starts at the origin
  if (cfg.periodic) {
    dx -= lx * std::round(dx / lx);
    dy -= ly * std::round(dy / ly);
  }
  const double r2 = dx * dx + dy * dy;
  const double amp = kVortexBeta / (2.0 * kPi) * std::exp(0.5 * (1.0 - r2));
  const double dtemp =
      (gamma - 1.0) * kVortexBeta * kVortexBeta / (8.0 * gamma * kPi * kPi) * std::exp(1.0 - r2);
  const double temp = 1.0 - dtemp;
  const double rho = std::pow(temp, 1.0 / (gamma - 1.0));
  return {rho, kVortexU - amp * dy, kVortexV + amp * dx, 1.0, std::pow(rho, gamma)};
}

Vec3 swirl_wind(double x, double y, double t, double period) {
  const double g = std::cos(kPi * t / period);
  const double sx = std::sin(kPi * x), sy = std::sin(kPi * y);
  return {sx * sx * std::sin(2.0 * kPi * y) * g, -sy * sy * std::sin(2.0 * kPi * x) * g, 0.0};
}

double cosine_bell(double r, double radius, double hmax) {
  return r <= radius ? 0.5 * hmax * (1.0 + std::cos(kPi * r / radius)) : 0.0;
}

double rrtb_theta_perturbation(double x, double z) {
  return cosine_bell(std::hypot(x - kBubbleX, z - kBubbleZ), kBubbleRadius, kBubbleAmplitude);
}

std::array<double, 2> sphere_wind(double lon, double lat, double t, double period,
                                  double radius) {
  const double k = 10.0 * radius / period;
  const double g = std::cos(kPi * t / period);
  const double lp = lon - 2.0 * kPi * t / period;
  const double s = std::sin(lp);
  const double u = k * s * s * std::sin(2.0 * lat) * g + 2.0 * kPi * radius / period * std::cos(lat);
  const double v = k * std::sin(2.0 * lp) * std::cos(lat) * g;
  return {u, v};
}

Vec3 sphere_wind_cartesian(const Vec3& p, double t, double period, double radius) {
  const LatLon ll = to_latlon(p);
  const auto uv = sphere_wind(ll.lon, ll.lat, t, period, radius);
  return east_vector(ll.lon, ll.lat) * uv[0] + north_vector(ll.lon, ll.lat) * uv[1];
}

double sphere_tracer(const Vec3& p, double radius, double hmax) {
  const LatLon ll = to_latlon(p);
  const double rb = 0.5 * radius;
  double h = 0.0;
  for (double lon_c : {5.0 * kPi / 6.0, 7.0 * kPi / 6.0})
    h += cosine_bell(geodesic_distance(ll.lon, ll.lat, lon_c, 0.0, radius), rb, hmax);
  return h;
}

double l2_error_norm(const std::vector<double>& q, const std::vector<double>& exact) {
  if (q.size() != exact.size()) throw std::invalid_argument("l2_error_norm: size mismatch");
  if (q.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) s += (q[k] - exact[k]) * (q[k] - exact[k]);
  return std::sqrt(s) / double(q.size());
}

void write_diag_csv(std::ostream& os, const std::vector<DiagRow>& rows) {
  std::size_t nlev = 1;
  for (const auto& r : rows) nlev = std::max(nlev, r.cells.size());
  os << "step,time";
  for (std::size_t l = 0; l < nlev; ++l) os << ",cells_L" << l;
  os << ",mass_loss,energy_loss,tracer_loss,volume_loss\n";
  std::ostringstream line;
  line.imbue(std::locale::classic());
  line.precision(17);
  for (const auto& r : rows) {
    line.str("");
    line << r.step << ',' << r.time;
    for (std::size_t l = 0; l < nlev; ++l) line << ',' << (l < r.cells.size() ? r.cells[l] : 0);
    line << ',' << r.mass_loss << ',' << r.energy_loss << ',' << r.tracer_loss << ','
         << r.volume_loss << '\n';
    os << line.str();
  }
}

void write_report(std::ostream& os, const CaseConfig& cfg, const CaseResult& r) {
  std::ostringstream o;
  o.imbue(std::locale::classic());
  o.precision(6);
  o << "case " << to_string(cfg.id) << "\n";
  o << "backend " << to_string(cfg.backend) << "\n";
  if (cfg.backend == Backend::kTree) o << "flux " << to_string(cfg.flux) << "\n";
  o << "steps " << r.steps << "\n";
  o << "regrids " << r.regrids << "\n";
  o << "wall_seconds " << r.wall_seconds << "\n";
  o << std::scientific;
  o << "max_mass_loss " << r.max_mass_loss << "\n";
  o << "max_energy_loss " << r.max_energy_loss << "\n";
  o << "max_tracer_loss " << r.max_tracer_loss << "\n";
  o << "max_volume_loss " << r.max_volume_loss << "\n";
  if (!std::isnan(r.l2_paper)) o << "l2_error_dof_normalized " << r.l2_paper << "\n";
  if (!std::isnan(r.l2_integral)) o << "l2_error_integral " << r.l2_integral << "\n";
  if (!std::isnan(r.max_error)) o << "max_error " << r.max_error << "\n";
  if (!std::isnan(r.max_error_far)) o << "max_error_far " << r.max_error_far << "\n";
  if (r.tracking_checks > 0)
    o << "tracking_failures " << r.tracking_failures << " of " << r.tracking_checks << "\n";
  if (cfg.id == CaseId::kSphereAdvect) {
    o << "transfer_mismatch " << r.transfer_mismatch << "\n";
    o << "rescale_fallbacks " << r.rescale_fallbacks << "\n";
  }
  o << "cfl_warnings " << r.cfl_warnings << "\n";
  o << "min_stable_dt " << r.min_stable_dt << "\n";
  if (!r.boxes_per_level.empty()) {
    o << "boxes_per_level";
    for (int b : r.boxes_per_level) o << ' ' << b;
    o << "\nmax_boxes " << r.max_boxes << "\n";
  }
  o << "peak_cells " << r.peak_cells << " at_time " << r.peak_cells_time << "\n";
  os << o.str();
}

}  // namespace amrlab
