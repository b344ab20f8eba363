#pragma once
// Weighted point clouds (sigma and pushforward measures) and the midpoint
// quadrature of the reference measure mu_rho on D_rho.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "vortex/boundary.hpp"
#include "vortex/config.hpp"
#include "vortex/core.hpp"

namespace vortex {

// Weighted atoms in the plane. Used for sigma (coordinates Upsilon, Z) and for
// pushforward clouds in the (s, phi(z)) plane.
struct Cloud {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> w;

  int size() const { return static_cast<int>(w.size()); }

  void push(double xi, double yi, double wi) {
    x.push_back(xi);
    y.push_back(yi);
    w.push_back(wi);
  }

  double total_weight() const {
    double s = 0.0;
    for (double v : w) s += v;
    return s;
  }

  // Rescales so the weights sum to 1 exactly (last weight absorbs rounding).
  void renormalize_exact() {
    if (w.empty()) return;
    const double tot = total_weight();
    if (!(tot > 0.0)) throw std::invalid_argument("Cloud: nonpositive total weight");
    for (double& v : w) v /= tot;
    double s = 0.0;
    for (size_t i = 0; i + 1 < w.size(); ++i) s += w[i];
    w.back() = 1.0 - s;
  }

  // Merges atoms with exactly equal positions, summing weights.
  Cloud merged_duplicates() const {
    Cloud out;
    for (int i = 0; i < size(); ++i) {
      bool found = false;
      for (int k = 0; k < out.size(); ++k)
        if (out.x[k] == x[i] && out.y[k] == y[i]) {
          out.w[k] += w[i];
          found = true;
          break;
        }
      if (!found) out.push(x[i], y[i], w[i]);
    }
    return out;
  }
};

inline double support_radius(const Cloud& c) {
  double r = 0.0;
  for (int i = 0; i < c.size(); ++i) r = std::max(r, std::hypot(c.x[i], c.y[i]));
  return r;
}

// m2[sigma] = 1/2 int (Upsilon^2 + Z^2) dsigma.
inline double second_moment(const Cloud& c) {
  double s = 0.0;
  for (int i = 0; i < c.size(); ++i) s += c.w[i] * (c.x[i] * c.x[i] + c.y[i] * c.y[i]);
  return 0.5 * s;
}

// Checks sigma invariants: coordinates positive, support inside B_l.
inline void check_sigma(const Cloud& sigma, double l) {
  if (sigma.size() == 0) throw std::invalid_argument("sigma: empty atom set");
  for (int i = 0; i < sigma.size(); ++i) {
    if (!(sigma.x[i] > 0.0) || !(sigma.y[i] > 0.0))
      throw std::invalid_argument("sigma: atom coordinates must be positive");
    if (!(std::hypot(sigma.x[i], sigma.y[i]) < l))
      throw std::invalid_argument("sigma: atom outside B_l");
    if (!(sigma.w[i] > 0.0)) throw std::invalid_argument("sigma: nonpositive weight");
  }
}

// Quadrature of mu_rho: tensor grid over [0, max rho] x [0, H], midpoint rule
// in z, exact in s. Each s-cell of column j is truncated at rho(z_j); its
// weight is the exact density integral over the covered interval (the
// antiderivative is elementary) and its node sits at the density-weighted
// centroid. Nodes are stored column major.
struct ReferenceMeasure {
  std::vector<double> s;    // node s coordinate
  std::vector<int> col;     // height cell index of the node
  std::vector<double> w;    // node mass = density(s) * ds * dz
  std::vector<int> col_begin;  // node range per column, size n_z + 1
  std::vector<double> z_grid;
  double ds = 0.0;
  double dz = 0.0;
  double mass = 0.0;

  int size() const { return static_cast<int>(s.size()); }
  int n_z() const { return static_cast<int>(z_grid.size()); }
};

inline ReferenceMeasure build_reference_measure(const FreeBoundary& fb, const Frame& fr, int n_s) {
  if (n_s < 2) throw std::invalid_argument("build_reference_measure: resolution < 2");
  const int n_z = fb.size();
  if (n_z < 1) throw std::invalid_argument("build_reference_measure: empty boundary");
  ReferenceMeasure rm;
  rm.z_grid = fb.z_grid;
  const double H = (fb.z_grid.back() + fb.z_grid.front());  // midpoint grid spans [0, H]
  rm.dz = H / n_z;
  const double s_max = fb.max_value();
  rm.col_begin.assign(n_z + 1, 0);
  if (s_max <= 0.0) {
    rm.ds = 0.0;
    return rm;
  }
  rm.ds = s_max / n_s;
  for (int j = 0; j < n_z; ++j) {
    rm.col_begin[j] = rm.size();
    const double rho_j = fb.rho[j];
    for (int k = 0; k < n_s; ++k) {
      const double a = k * rm.ds;
      if (a >= rho_j) break;
      const double b = std::min((k + 1) * rm.ds, rho_j);
      const double dmass = fr.int_density(b) - fr.int_density(a);
      if (!(dmass > 0.0)) continue;
      const double centroid = (fr.int_s_density(b) - fr.int_s_density(a)) / dmass;
      const double wk = dmass * rm.dz;
      rm.s.push_back(centroid);
      rm.col.push_back(j);
      rm.w.push_back(wk);
      rm.mass += wk;
    }
  }
  rm.col_begin[n_z] = rm.size();
  return rm;
}

// Exact s-integral of the density per column, midpoint rule in z. Used as the
// quadrature oracle in tests and for the mass of candidate boundaries.
inline double closed_form_mass(const FreeBoundary& fb, const Frame& fr) {
  const int n_z = fb.size();
  if (n_z == 0) return 0.0;
  const double H = fb.z_grid.back() + fb.z_grid.front();
  const double dz = H / n_z;
  double m = 0.0;
  for (int j = 0; j < n_z; ++j) m += fr.int_density(fb.rho[j]) * dz;
  return m;
}

// Pushforward of the quadrature through f(s, z) = (s, phi(z)). Weights are the
// same vector, so mass is preserved exactly.
inline Cloud f_pushforward(const ReferenceMeasure& rm, const AmbientProfile& ambient) {
  Cloud c;
  c.x = rm.s;
  c.w = rm.w;
  c.y.resize(rm.size());
  std::vector<double> phi_col(rm.n_z());
  for (int j = 0; j < rm.n_z(); ++j) phi_col[j] = ambient.phi(rm.z_grid[j]);
  for (int i = 0; i < rm.size(); ++i) c.y[i] = phi_col[rm.col[i]];
  return c;
}

}  // namespace vortex
