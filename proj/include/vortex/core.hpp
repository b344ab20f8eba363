#pragma once
// Rotating-frame constants and the maps between the physical radius r and the
// squared-angular-momentum coordinate s. Everything downstream (quadrature,
// free-boundary scan, reconstruction) is built from the closed forms here.

#include <cmath>
#include <stdexcept>

namespace vortex {

// Smallest allowed value of u = 1 - 2 r0^2 s. The scan for the free boundary
// stays below the corresponding s, well away from the f0 pole.
inline constexpr double kPoleMarginU = 1e-3;

struct Frame {
  double r0 = 1.0;
  double omega = 1.0;

  // s value of the pole of f0.
  double pole() const { return 1.0 / (2.0 * r0 * r0); }

  // Upper end of the scan interval for boundary minimization.
  double scan_cap() const { return (1.0 - kPoleMarginU) * pole(); }

  double u_of_s(double s) const { return 1.0 - 2.0 * r0 * r0 * s; }

  // f0(s) = r0^2 Omega^2 / (2 (1 - 2 r0^2 s)), strictly increasing on
  // [0, pole), blows up at the pole.
  double f0(double s) const {
    const double u = u_of_s(s);
    if (s < 0.0 || u <= 0.0) throw std::domain_error("f0: s outside [0, 1/(2 r0^2))");
    return r0 * r0 * omega * omega / (2.0 * u);
  }

  double f0_prime(double s) const {
    const double u = u_of_s(s);
    if (s < 0.0 || u <= 0.0) throw std::domain_error("f0_prime: s outside [0, 1/(2 r0^2))");
    const double r02 = r0 * r0;
    return r02 * r02 * omega * omega / (u * u);
  }

  // s[r] = (r0^-2 - r^-2)/2, inverse of r_of_s on r >= r0.
  double s_of_r(double r) const {
    if (r < r0) throw std::domain_error("s_of_r: r < r0");
    return 0.5 * (1.0 / (r0 * r0) - 1.0 / (r * r));
  }

  double r_of_s(double s) const { return std::sqrt(2.0 * f0(s)) / omega; }

  // Density of the reference measure, (2 f0(s)/Omega^2)^2 = r0^4 / u^2.
  double density(double s) const {
    const double u = u_of_s(s);
    if (s < 0.0 || u <= 0.0) throw std::domain_error("density: s outside domain");
    const double r02 = r0 * r0;
    return r02 * r02 / (u * u);
  }

  // Antiderivatives on [0, s] of density, f0*density, s*density, s^2*density.
  // All are elementary in u = 1 - 2 r0^2 s; they make column masses and the
  // boundary functional exact for piecewise-affine potentials.
  double int_density(double s) const {
    const double u = u_of_s(s);
    return 0.5 * r0 * r0 * (1.0 / u - 1.0);
  }
  double int_f0_density(double s) const {
    const double u = u_of_s(s);
    const double r02 = r0 * r0;
    return r02 * r02 * omega * omega / 8.0 * (1.0 / (u * u) - 1.0);
  }
  double int_s_density(double s) const {
    const double u = u_of_s(s);
    return 0.25 * (1.0 / u - 1.0) + 0.25 * std::log(u);
  }
  double int_s2_density(double s) const {
    const double u = u_of_s(s);
    const double r02 = r0 * r0;
    return (1.0 / u - 1.0) / (8.0 * r02) + std::log(u) / (4.0 * r02) + 0.25 * s;
  }
};

// Transport cost c(p, m, q) = s*Upsilon + z*Z/m with p = (s, z), q = (Upsilon, Z).
inline double cost(double s, double z, double m, double ups, double zed) {
  if (m <= 0.0) throw std::domain_error("cost: temperature argument m must be positive");
  return s * ups + z * zed / m;
}

}  // namespace vortex
