#pragma once
// Shared test fixtures: small configurations, seeded instances, and the
// brute-force transport oracle used to pin expected values.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "atom_gen.hpp"
#include "vortex/vortex.hpp"

namespace vtest {

using namespace vortex;

// canonical constants with a cheaper quadrature for unit scale
inline ModelConfig small_config(int n = 128) {
  ModelConfig cfg = ModelConfig::canonical();
  cfg.solver.n_s = n;
  cfg.solver.n_z = n;
  return cfg;
}

inline Cloud four_atoms() {
  Cloud c;
  c.push(1.0, 0.8, 0.25);
  c.push(0.6, 1.2, 0.25);
  c.push(1.4, 1.1, 0.25);
  c.push(0.9, 1.5, 0.25);
  c.renormalize_exact();
  return c;
}

struct Rng {
  std::mt19937_64 gen;
  explicit Rng(std::uint64_t seed) : gen(seed) {}
  double uni(double a, double b) { return a + (b - a) * ((gen() >> 11) * 0x1.0p-53); }
};

// exhaustive optimal matching between equal-weight clouds of the same size
inline double brute_force_ot(const Cloud& a, const Cloud& b, const GroundCost& cost) {
  const int n = a.size();
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  double best = 1e300;
  do {
    double c = 0.0;
    for (int i = 0; i < n; ++i) c += a.w[i] * cost(a.x[i], a.y[i], b.x[perm[i]], b.y[perm[i]]);
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline FreeBoundary constant_boundary(double rho, double H, int n_z) {
  FreeBoundary fb;
  fb.z_grid = uniform_z_grid(H, n_z);
  fb.rho.assign(n_z, rho);
  return fb;
}

// W1 between two reference measures on a shared height grid. The common mass
// below min(rho_a, rho_b) cancels in W1, so only the thin strips between the
// boundaries transport; each strip collapses to its density centroid.
inline double w1_between_boundaries(const FreeBoundary& a, const FreeBoundary& b,
                                    const Frame& fr) {
  if (a.size() != b.size()) throw std::invalid_argument("w1_between_boundaries: grid mismatch");
  const int n_z = a.size();
  const double H = a.z_grid.back() + a.z_grid.front();
  const double dz = H / n_z;
  Cloud pos, neg;  // where b exceeds a and vice versa
  for (int j = 0; j < n_z; ++j) {
    const double lo = std::min(a.rho[j], b.rho[j]);
    const double hi = std::max(a.rho[j], b.rho[j]);
    const double dmass = (fr.int_density(hi) - fr.int_density(lo)) * dz;
    if (!(dmass > 0.0)) continue;
    const double centroid = (fr.int_s_density(hi) - fr.int_s_density(lo)) / (dmass / dz);
    if (b.rho[j] > a.rho[j])
      pos.push(centroid, a.z_grid[j], dmass);
    else
      neg.push(centroid, a.z_grid[j], dmass);
  }
  const double wp = pos.total_weight(), wn = neg.total_weight();
  // a one-sided difference can only carry the (tiny) total-mass imbalance
  if (std::min(wp, wn) <= 1e-8) return 0.0;
  for (double& w : neg.w) w *= wp / wn;
  return w1_distance(pos, neg, 8192);
}

}  // namespace vtest
