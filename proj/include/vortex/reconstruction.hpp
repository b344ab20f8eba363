#pragma once
// Physical fields recovered from a converged dual state: pressure from the
// lazy potential, temperature and tangential wind from the assigned atom
// coordinates, the free surface from the boundary, and the diagnostic
// meridional circulation from barycenter differences between steps.

#include <cmath>
#include <queue>
#include <stdexcept>
#include <vector>

#include "vortex/dual.hpp"
#include "vortex/dynamics.hpp"

namespace vortex {

// phi(r, z) = P(s[r], z, theta0(z)) - Omega^2 r^2 / 2, defined for r >= r0.
inline double pressure_at(const DualState& st, const ModelConfig& cfg, double r, double z) {
  const Frame fr = cfg.frame();
  const double s = fr.s_of_r(r);  // throws for r < r0
  return st.P(s, z, cfg.ambient.theta0(z)) - 0.5 * cfg.omega * cfg.omega * r * r;
}

struct FieldGrid {
  std::vector<double> r_grid, z_grid;
  int nr = 0, nz = 0;
  std::vector<uint8_t> inside;   // row-major [iz * nr + ir]
  std::vector<int> atom;
  std::vector<double> pressure, theta, u;

  int idx(int ir, int iz) const { return iz * nr + ir; }
};

// Samples pressure, temperature and tangential wind on an r x z grid over the
// vortex domain; points with s[r] > rho(z) are masked.
inline FieldGrid reconstruct_fields(const DualState& st, const ModelConfig& cfg, int nr, int nz) {
  const Frame fr = cfg.frame();
  FieldGrid fg;
  fg.nr = nr;
  fg.nz = nz;
  const double r_hi = fr.r_of_s(std::max(st.boundary.max_value(), 1e-12));
  fg.r_grid.resize(nr);
  for (int ir = 0; ir < nr; ++ir)
    fg.r_grid[ir] = cfg.r0 + (r_hi - cfg.r0) * (ir + 0.5) / nr;
  fg.z_grid = st.boundary.z_grid;
  if (nz != st.boundary.size()) fg.z_grid = uniform_z_grid(cfg.H, nz);
  fg.inside.assign(static_cast<size_t>(nr) * nz, 0);
  fg.atom.assign(static_cast<size_t>(nr) * nz, -1);
  fg.pressure.assign(static_cast<size_t>(nr) * nz, 0.0);
  fg.theta.assign(static_cast<size_t>(nr) * nz, 0.0);
  fg.u.assign(static_cast<size_t>(nr) * nz, 0.0);

  const int nb = st.boundary.size();
  for (int iz = 0; iz < nz; ++iz) {
    const double z = fg.z_grid[iz];
    // boundary value at this height (piecewise constant on the solver grid)
    const int jb = std::min(nb - 1, std::max(0, static_cast<int>(z / cfg.H * nb)));
    const double rho_z = st.boundary.rho[jb];
    const double m = cfg.ambient.theta0(z);
    for (int ir = 0; ir < nr; ++ir) {
      const double r = fg.r_grid[ir];
      const double s = fr.s_of_r(r);
      if (s > rho_z) continue;
      const int i = argmax_atom(st.sigma, st.psi, s, z, m);
      const int k = fg.idx(ir, iz);
      fg.inside[k] = 1;
      fg.atom[k] = i;
      fg.pressure[k] = potential_P(st.sigma, st.psi, s, z, m) - 0.5 * cfg.omega * cfg.omega * r * r;
      fg.theta[k] = st.sigma.y[i] / cfg.g;
      fg.u[k] = std::sqrt(st.sigma.x[i]) / r - r * cfg.omega;
    }
  }
  return fg;
}

// max over {rho > 1e-3} of |pressure at the free surface|; zero in the
// continuum by the boundary condition.
inline double surface_pressure_residual(const DualState& st, const ModelConfig& cfg) {
  const Frame fr = cfg.frame();
  double worst = 0.0;
  for (int j = 0; j < st.boundary.size(); ++j) {
    const double rho = st.boundary.rho[j];
    if (rho <= 1e-3) continue;
    const double sig = fr.r_of_s(rho);
    worst = std::max(worst, std::abs(pressure_at(st, cfg, sig, st.boundary.z_grid[j])));
  }
  return worst;
}

struct MeridionalSample {
  double r = 0.0, z = 0.0;
  double v = 0.0, w = 0.0;
  int atom = -1;
};

// Diagnostic meridional circulation: per-atom finite difference of the
// physical barycenter positions between steps k and k+1. No accuracy claim
// beyond O(tau) + O(grid).
inline std::vector<MeridionalSample> meridional_vw(const Trajectory& traj, int k,
                                                   const ModelConfig& cfg) {
  if (k + 1 >= static_cast<int>(traj.states.size()))
    throw std::invalid_argument("meridional_vw: needs steps k and k+1");
  const Frame fr = cfg.frame();
  const Barycenters b0 = barycenter_selection(traj.states[k], cfg);
  const Barycenters b1 = barycenter_selection(traj.states[k + 1], cfg);
  const double tau = cfg.tau();
  std::vector<MeridionalSample> out(b0.s.size());
  for (size_t i = 0; i < b0.s.size(); ++i) {
    const double r0k = fr.r_of_s(b0.s[i]);
    const double r1k = fr.r_of_s(b1.s[i]);
    out[i].r = r0k;
    out[i].z = b0.zbar[i];
    out[i].v = (r1k - r0k) / tau;
    out[i].w = (b1.zbar[i] - b0.zbar[i]) / tau;
    out[i].atom = static_cast<int>(i);
  }
  return out;
}

struct StabilityReport {
  bool pass = false;
  std::vector<int> cell_points;      // grid points per atom
  std::vector<int> cell_components;  // connected components per atom
};

// Discrete invertibility check: every atom's cell is nonempty and
// grid-connected, so the assignment map hits distinct atoms on distinct
// connected regions.
inline StabilityReport stability_check(const DualState& st, const ModelConfig& cfg, int nr = 128,
                                       int nz = 128) {
  const FieldGrid fg = reconstruct_fields(st, cfg, nr, nz);
  const int n = st.sigma.size();
  StabilityReport rep;
  rep.cell_points.assign(n, 0);
  rep.cell_components.assign(n, 0);
  std::vector<int> comp(fg.inside.size(), -1);
  int ncomp = 0;
  for (int iz = 0; iz < nz; ++iz)
    for (int ir = 0; ir < nr; ++ir) {
      const int k = fg.idx(ir, iz);
      if (!fg.inside[k]) continue;
      rep.cell_points[fg.atom[k]]++;
      if (comp[k] != -1) continue;
      // BFS over same-atom neighbors
      const int atom = fg.atom[k];
      rep.cell_components[atom]++;
      std::queue<int> q;
      comp[k] = ncomp;
      q.push(k);
      while (!q.empty()) {
        const int cur = q.front();
        q.pop();
        const int cir = cur % nr, ciz = cur / nr;
        const int nb4[4][2] = {{cir - 1, ciz}, {cir + 1, ciz}, {cir, ciz - 1}, {cir, ciz + 1}};
        for (auto& nb : nb4) {
          if (nb[0] < 0 || nb[0] >= nr || nb[1] < 0 || nb[1] >= nz) continue;
          const int kk = fg.idx(nb[0], nb[1]);
          if (!fg.inside[kk] || comp[kk] != -1 || fg.atom[kk] != atom) continue;
          comp[kk] = ncomp;
          q.push(kk);
        }
      }
      ++ncomp;
    }
  rep.pass = true;
  for (int i = 0; i < n; ++i)
    if (rep.cell_points[i] == 0 || rep.cell_components[i] != 1) rep.pass = false;
  return rep;
}

}  // namespace vortex
