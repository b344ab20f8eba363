#pragma once
// Seeded atom generator: uniform over an annulus sector of the open quadrant,
// equal weights. Uses raw mt19937_64 draws (not distribution objects) so the
// sequence is identical across standard libraries.

#include <cmath>
#include <random>
#include <stdexcept>

#include "vortex/measure.hpp"

namespace vortex {

struct AtomGenOptions {
  int count = 8;
  double radius_lo = 0.8;
  double radius_hi = 1.9;
  double angle_lo_deg = 20.0;
  double angle_hi_deg = 70.0;
  double min_zed = 0.5;  // resample until Z >= min_zed
};

inline Cloud generate_atoms(std::uint64_t seed, const AtomGenOptions& opt) {
  if (opt.count < 1) throw std::invalid_argument("generate_atoms: count < 1");
  std::mt19937_64 rng(seed);
  auto uni = [&rng](double a, double b) {
    return a + (b - a) * ((rng() >> 11) * 0x1.0p-53);
  };
  Cloud c;
  int guard = 100000;
  while (c.size() < opt.count) {
    if (--guard < 0) throw std::runtime_error("generate_atoms: rejection loop exhausted");
    const double ang = uni(opt.angle_lo_deg, opt.angle_hi_deg) * M_PI / 180.0;
    const double rad = uni(opt.radius_lo, opt.radius_hi);
    const double ux = rad * std::cos(ang);
    const double zz = rad * std::sin(ang);
    if (zz < opt.min_zed || ux <= 0.0) continue;
    c.push(ux, zz, 1.0);
  }
  c.renormalize_exact();
  return c;
}

}  // namespace vortex
