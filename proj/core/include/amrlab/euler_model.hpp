#pragma once

// Compressible Euler closure in (rho, U, V, Theta, C) form with a
// hydrostatic background. The prognostic vector stores perturbations
// rho' and Theta' plus total momentum and tracer mass.

#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace amrlab {

struct PhysicalConstants {
  double p0 = 1.0e5;
  double R = 287.0;
  double cp = 1004.5;
  double cv = 717.5;
  double g = 9.81;
  double r_earth = 6371000.0;

  double gamma() const { return cp / cv; }
  /// Throws std::invalid_argument unless R = cp - cv and gamma > 1.
  void validate() const;

  /// Nondimensional set used by the isentropic vortex (gamma = 1.4, p0 = 1).
  static PhysicalConstants nondimensional();
};

// Variable slots of the prognostic vector.
enum EulerVar : int { kRho = 0, kMomX = 1, kMomY = 2, kTheta = 3, kTracer = 4 };
inline constexpr int kEulerVars = 5;

/// P = p0 (R Theta / p0)^gamma. Throws std::domain_error for Theta <= 0.
double equation_of_state(double theta_density, const PhysicalConstants& c);

/// Inverse of the equation of state: Theta such that P(Theta) = p.
double theta_from_pressure(double p, const PhysicalConstants& c);

/// a = sqrt(gamma P / rho).
double sound_speed(double p, double rho, const PhysicalConstants& c);

struct BackgroundSample {
  double rho = 0.0;
  double theta_density = 0.0;  // rho * theta
  double pressure = 0.0;
};

struct BackgroundState {
  double theta0 = 0.0;
  std::vector<double> z;
  std::vector<BackgroundSample> samples;
};

/// Neutrally stratified (constant theta0) background evaluated at height z.
/// Throws std::domain_error beyond the zero-pressure height.
BackgroundSample hydrostatic_sample(double theta0, const PhysicalConstants& c, double z);

BackgroundState hydrostatic_background(double theta0, const PhysicalConstants& c,
                                       std::span<const double> z);

/// Physical flux of the perturbation system at one point.
/// bg carries the background (rho, Theta, P) at that point; fx, fy receive
/// the x and y flux of each of the five variables.
struct EulerFlux {
  std::array<double, kEulerVars> fx{};
  std::array<double, kEulerVars> fy{};
  double pressure_perturbation = 0.0;
};

EulerFlux flux_tensor(const std::array<double, kEulerVars>& q, const BackgroundSample& bg,
                      const PhysicalConstants& c);

/// Gravity source: only the y-momentum row is non-zero (-rho' g).
std::array<double, kEulerVars> source_terms(const std::array<double, kEulerVars>& q,
                                            const PhysicalConstants& c);

/// Relative deviation |x - x0| / |x0|; returns |x - x0| when x0 == 0.
inline double relative_loss(double x, double x0) {
  return x0 != 0.0 ? std::abs(x - x0) / std::abs(x0) : std::abs(x - x0);
}

/// Pointwise energy density |U|^2/(2 rho) + cv P / R + rho g y.
double energy_density(const std::array<double, kEulerVars>& q, const BackgroundSample& bg,
                      double y, const PhysicalConstants& c);

}  // namespace amrlab
