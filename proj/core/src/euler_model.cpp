#include "amrlab/euler_model.hpp"

#include <stdexcept>
#include <string>

namespace amrlab {

void PhysicalConstants::validate() const {
  if (std::abs(R - (cp - cv)) > 1e-9 * std::abs(cp))
    throw std::invalid_argument("PhysicalConstants: R must equal cp - cv");
  if (!(cp / cv > 1.0)) throw std::invalid_argument("PhysicalConstants: gamma must exceed 1");
  if (!(p0 > 0.0)) throw std::invalid_argument("PhysicalConstants: p0 must be positive");
}

PhysicalConstants PhysicalConstants::nondimensional() {
  PhysicalConstants c;
  c.p0 = 1.0;
  c.R = 1.0;
  c.cp = 3.5;
  c.cv = 2.5;
  c.g = 0.0;
  return c;
}

double equation_of_state(double theta_density, const PhysicalConstants& c) {
  if (!(theta_density > 0.0))
    throw std::domain_error("equation_of_state: Theta must be positive, got " +
                            std::to_string(theta_density));
  return c.p0 * std::pow(c.R * theta_density / c.p0, c.gamma());
}

double theta_from_pressure(double p, const PhysicalConstants& c) {
  if (!(p > 0.0)) throw std::domain_error("theta_from_pressure: pressure must be positive");
  return (c.p0 / c.R) * std::pow(p / c.p0, 1.0 / c.gamma());
}

double sound_speed(double p, double rho, const PhysicalConstants& c) {
  if (!(p > 0.0) || !(rho > 0.0))
    throw std::domain_error("sound_speed: pressure and density must be positive");
  return std::sqrt(c.gamma() * p / rho);
}

BackgroundSample hydrostatic_sample(double theta0, const PhysicalConstants& c, double z) {
  if (!(theta0 > 0.0)) throw std::invalid_argument("hydrostatic_background: theta0 <= 0");
  const double base = 1.0 - c.g * z / (c.cp * theta0);
  if (!(base > 0.0))
    throw std::domain_error("hydrostatic_background: z beyond the zero-pressure height");
  BackgroundSample s;
  // Theta from the pressure profile, then P recomputed through the EOS so
  // that a resting background has exactly zero pressure perturbation.
  const double p_exact = c.p0 * std::pow(base, c.cp / c.R);
  s.theta_density = theta_from_pressure(p_exact, c);
  s.pressure = equation_of_state(s.theta_density, c);
  s.rho = s.theta_density / theta0;
  return s;
}

BackgroundState hydrostatic_background(double theta0, const PhysicalConstants& c,
                                       std::span<const double> z) {
  BackgroundState b;
  b.theta0 = theta0;
  b.z.assign(z.begin(), z.end());
  b.samples.reserve(z.size());
  for (double zi : z) b.samples.push_back(hydrostatic_sample(theta0, c, zi));
  return b;
}

EulerFlux flux_tensor(const std::array<double, kEulerVars>& q, const BackgroundSample& bg,
                      const PhysicalConstants& c) {
  const double rho = bg.rho + q[kRho];
  const double theta = bg.theta_density + q[kTheta];
  const double p = equation_of_state(theta, c);
  const double dp = p - bg.pressure;
  const double u = q[kMomX] / rho;
  const double v = q[kMomY] / rho;
  EulerFlux f;
  f.pressure_perturbation = dp;
  f.fx = {q[kMomX], q[kMomX] * u + dp, q[kMomY] * u, theta * u, q[kTracer] * u};
  f.fy = {q[kMomY], q[kMomX] * v, q[kMomY] * v + dp, theta * v, q[kTracer] * v};
  return f;
}

std::array<double, kEulerVars> source_terms(const std::array<double, kEulerVars>& q,
                                            const PhysicalConstants& c) {
  return {0.0, 0.0, -q[kRho] * c.g, 0.0, 0.0};
}

double energy_density(const std::array<double, kEulerVars>& q, const BackgroundSample& bg,
                      double y, const PhysicalConstants& c) {
  const double rho = bg.rho + q[kRho];
  const double p = equation_of_state(bg.theta_density + q[kTheta], c);
  const double ke = 0.5 * (q[kMomX] * q[kMomX] + q[kMomY] * q[kMomY]) / rho;
  return ke + c.cv * p / c.R + rho * c.g * y;
}

}  // namespace amrlab
