#pragma once
// Time stepping: the velocity field acts on the sigma atoms through the
// barycenter selection of the inverse map, the dual state is frozen on each
// sub-interval and one explicit Euler increment is taken. Weights never
// change, so particle mass is conserved bit-exactly.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "vortex/dual.hpp"

namespace vortex {

// Velocity bound constant C0(l) = M sqrt(4 l + 1).
inline double velocity_bound(double M, double l) { return M * std::sqrt(4.0 * l + 1.0); }

struct AtomVelocities {
  std::vector<double> vx, vy;
  double max_norm = 0.0;
};

// V_i = (2 sqrt(Upsilon_i) F0(t, r(s_bar_i), z_bar_i), g F1(t, r(s_bar_i), z_bar_i))
// with (s_bar, z_bar) the barycenter selection of the converged cells.
inline AtomVelocities velocity(const DualState& st, const ModelConfig& cfg, double t) {
  const Barycenters b = barycenter_selection(st, cfg);
  const Frame fr = cfg.frame();
  const int n = st.sigma.size();
  AtomVelocities vel;
  vel.vx.resize(n);
  vel.vy.resize(n);
  for (int i = 0; i < n; ++i) {
    if (b.s[i] >= fr.scan_cap() + 1e-12)
      throw std::domain_error("velocity: barycenter too close to the pole");
    const double r = fr.r_of_s(b.s[i]);
    const double zb = b.zbar[i];
    vel.vx[i] = 2.0 * std::sqrt(st.sigma.x[i]) * cfg.forcing.F0(t, r, zb);
    vel.vy[i] = cfg.g * cfg.forcing.F1(t, r, zb);
    vel.max_norm = std::max(vel.max_norm, std::hypot(vel.vx[i], vel.vy[i]));
  }
  return vel;
}

// One explicit Euler increment; weights are carried over untouched.
inline Cloud euler_step(const Cloud& sigma, const AtomVelocities& vel, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("euler_step: tau must be positive");
  Cloud out = sigma;
  for (int i = 0; i < sigma.size(); ++i) {
    out.x[i] = sigma.x[i] + tau * vel.vx[i];
    out.y[i] = sigma.y[i] + tau * vel.vy[i];
    if (!(out.x[i] > 0.0) || !(out.y[i] > 0.0))
      throw std::runtime_error("euler_step: atom left the open quadrant");
  }
  return out;
}

struct StepDiagnostics {
  double t = 0.0;
  double J = 0.0, K = 0.0, m2 = 0.0, gap = 0.0;
  double mass = 0.0;
  double support_radius = 0.0;
  double w1_step = 0.0;  // W1(sigma_k, sigma_{k+1}), zero at the final record
  double boundary_residual = 0.0;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Cloud> sigmas;
  std::vector<std::vector<double>> psis;
  std::vector<FreeBoundary> boundaries;
  std::vector<StepDiagnostics> diagnostics;
  std::vector<DualState> states;
};

struct SupportBoundError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Discrete support bound from the theorem: l_k <= (e^{4 M t}(4 l0 + 1) - 1)/4.
inline double support_bound(double M, double l0, double t) {
  return 0.25 * (std::exp(4.0 * M * t) * (4.0 * l0 + 1.0) - 1.0);
}

// Runs the N-step scheme: solve, freeze the dual state, one Euler increment.
// Asserts the support and W1 bounds at every step.
inline Trajectory simulate(const Cloud& sigma0, const ModelConfig& cfg) {
  if (!cfg.theorem_precondition_ok())
    throw SupportBoundError("simulate: e^{4MT}(4 l0 + 1) < l + 1 fails");
  Cloud sigma = sigma0.merged_duplicates();
  sigma.renormalize_exact();
  check_sigma(sigma, cfg.l);
  if (support_radius(sigma) > cfg.l0)
    throw SupportBoundError("simulate: initial support outside B_{l0}");

  const double tau = cfg.tau();
  const double c0 = velocity_bound(cfg.M, cfg.l);
  Trajectory traj;
  std::vector<double> warm;
  for (int k = 0; k <= cfg.N; ++k) {
    const double t = k * tau;
    auto [state, rep] = solve_dual(sigma, cfg, warm.empty() ? nullptr : &warm);
    warm = state.psi;

    StepDiagnostics d;
    d.t = t;
    d.J = rep.J;
    d.K = rep.K;
    d.m2 = rep.m2;
    d.gap = rep.gap;
    d.mass = sigma.total_weight();
    d.support_radius = support_radius(sigma);
    d.boundary_residual = rep.boundary_residual;

    const double bound = support_bound(cfg.M, cfg.l0, t) + 1e-9;
    if (d.support_radius > bound)
      throw SupportBoundError("simulate: support bound violated at step " + std::to_string(k));

    traj.times.push_back(t);
    traj.sigmas.push_back(sigma);
    traj.psis.push_back(state.psi);
    traj.boundaries.push_back(state.boundary);

    if (k < cfg.N) {
      const AtomVelocities vel = velocity(state, cfg, t);
      if (vel.max_norm > c0 + 1e-9)
        throw SupportBoundError("simulate: velocity bound violated at step " + std::to_string(k));
      Cloud next = euler_step(sigma, vel, tau);
      d.w1_step = w1_distance(sigma, next, cfg.solver.ot_cap);
      if (d.w1_step > c0 * tau + 1e-12)
        throw SupportBoundError("simulate: W1 step bound violated at step " + std::to_string(k));
      sigma = std::move(next);
    }
    traj.diagnostics.push_back(d);
    traj.states.push_back(std::move(state));
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Divergence surrogate: a convex paraboloid fitted to (q_i, Psi_i) with its
// gradient range clipped into W, then the finite-difference divergence of the
// induced velocity field on an interior grid.

struct ConvexQuadratic {
  double a = 0.0, b1 = 0.0, b2 = 0.0, h1 = 0.0, h2 = 0.0;
  double value(double ux, double uy) const {
    return a + b1 * ux + b2 * uy + 0.5 * h1 * ux * ux + 0.5 * h2 * uy * uy;
  }
  double grad_x(double ux) const { return b1 + h1 * ux; }
  double grad_y(double uy) const { return b2 + h2 * uy; }
};

// Least-squares fit of a diagonal quadratic, then clamping so that on the
// bounding box of the atoms the gradient stays strictly inside
// [eps, scan cap - eps] x [phi(0) + eps, phi(H) - eps].
inline ConvexQuadratic fit_convex_paraboloid(const Cloud& atoms, const std::vector<double>& psi,
                                             const ModelConfig& cfg) {
  const int n = atoms.size();
  if (n < 1) throw std::invalid_argument("fit_convex_paraboloid: no atoms");
  double A[5][5] = {};
  double rhs[5] = {};
  for (int i = 0; i < n; ++i) {
    const double row[5] = {1.0, atoms.x[i], atoms.y[i], 0.5 * atoms.x[i] * atoms.x[i],
                           0.5 * atoms.y[i] * atoms.y[i]};
    for (int r = 0; r < 5; ++r) {
      rhs[r] += row[r] * psi[i];
      for (int c = 0; c < 5; ++c) A[r][c] += row[r] * row[c];
    }
  }
  for (int r = 0; r < 5; ++r) A[r][r] += 1e-9;  // ridge for rank-deficient layouts
  // gaussian elimination with partial pivoting
  int piv[5] = {0, 1, 2, 3, 4};
  for (int c = 0; c < 5; ++c) {
    int pr = c;
    for (int r = c + 1; r < 5; ++r)
      if (std::abs(A[r][c]) > std::abs(A[pr][c])) pr = r;
    if (pr != c) {
      for (int k = 0; k < 5; ++k) std::swap(A[c][k], A[pr][k]);
      std::swap(rhs[c], rhs[pr]);
      std::swap(piv[c], piv[pr]);
    }
    for (int r = c + 1; r < 5; ++r) {
      const double f = A[r][c] / A[c][c];
      for (int k = c; k < 5; ++k) A[r][k] -= f * A[c][k];
      rhs[r] -= f * rhs[c];
    }
  }
  double sol[5];
  for (int r = 4; r >= 0; --r) {
    double acc = rhs[r];
    for (int k = r + 1; k < 5; ++k) acc -= A[r][k] * sol[k];
    sol[r] = acc / A[r][r];
  }
  ConvexQuadratic q{sol[0], sol[1], sol[2], std::max(0.0, sol[3]), std::max(0.0, sol[4])};

  // clip the gradient range over the atom bounding box into W
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (int i = 0; i < n; ++i) {
    x0 = std::min(x0, atoms.x[i]);
    x1 = std::max(x1, atoms.x[i]);
    y0 = std::min(y0, atoms.y[i]);
    y1 = std::max(y1, atoms.y[i]);
  }
  const Frame fr = cfg.frame();
  const double s_lo = 0.05 * fr.scan_cap(), s_hi = 0.95 * fr.scan_cap();
  const double p_lo = cfg.ambient.phi(0.0), p_hi = cfg.ambient.phi(cfg.H);
  const double pm = 0.05 * (p_hi - p_lo);
  auto clip_axis = [](double& b, double& h, double u0, double u1, double glo, double ghi) {
    if (h * (u1 - u0) > ghi - glo) h = (ghi - glo) / std::max(u1 - u0, 1e-12);
    const double lo = b + h * u0, hi = b + h * u1;
    if (lo < glo) b += glo - lo;
    else if (hi > ghi) b -= hi - ghi;
  };
  clip_axis(q.b1, q.h1, x0, x1, s_lo, s_hi);
  clip_axis(q.b2, q.h2, y0, y1, p_lo + pm, p_hi - pm);
  // verify
  if (q.grad_x(x0) < 0.0 || q.grad_x(x1) > fr.scan_cap() || q.grad_y(y0) < p_lo ||
      q.grad_y(y1) > p_hi)
    throw std::runtime_error("fit_convex_paraboloid: gradient range leaves W");
  return q;
}

// Minimum finite-difference divergence of V[Psi_smooth] over an interior grid
// of the atom bounding box. Nonnegative under convexity and the forcing
// monotonicity assumptions.
inline double divergence_check(const ConvexQuadratic& q, const Cloud& atoms,
                               const ModelConfig& cfg, int grid_n = 64, double t = 0.0) {
  const Frame fr = cfg.frame();
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (int i = 0; i < atoms.size(); ++i) {
    x0 = std::min(x0, atoms.x[i]);
    x1 = std::max(x1, atoms.x[i]);
    y0 = std::min(y0, atoms.y[i]);
    y1 = std::max(y1, atoms.y[i]);
  }
  if (!(x1 > x0) || !(y1 > y0)) {
    x0 -= 0.1;
    x1 += 0.1;
    y0 = std::max(1e-3, y0 - 0.1);
    y1 += 0.1;
  }
  auto vfield = [&](double ux, double uy, double& vx, double& vy) {
    const double gs = q.grad_x(ux);
    const double gp = q.grad_y(uy);
    const double r = fr.r_of_s(gs);
    const double z = cfg.ambient.phi_inverse(gp, cfg.H);
    vx = 2.0 * std::sqrt(ux) * cfg.forcing.F0(t, r, z);
    vy = cfg.g * cfg.forcing.F1(t, r, z);
  };
  const double hx = (x1 - x0) / (grid_n + 1);
  const double hy = (y1 - y0) / (grid_n + 1);
  double min_div = std::numeric_limits<double>::infinity();
  for (int a = 1; a <= grid_n; ++a)
    for (int b = 1; b <= grid_n; ++b) {
      const double ux = x0 + a * hx;
      const double uy = y0 + b * hy;
      double vxp, vyp, vxm, vym, dum;
      vfield(ux + 0.5 * hx, uy, vxp, dum);
      vfield(ux - 0.5 * hx, uy, vxm, dum);
      vfield(ux, uy + 0.5 * hy, dum, vyp);
      vfield(ux, uy - 0.5 * hy, dum, vym);
      const double div = (vxp - vxm) / hx + (vyp - vym) / hy;
      min_div = std::min(min_div, div);
    }
  return min_div;
}

inline double divergence_check(const DualState& st, const ModelConfig& cfg, int grid_n = 64,
                               double t = 0.0) {
  const ConvexQuadratic q = fit_convex_paraboloid(st.sigma, st.psi, cfg);
  return divergence_check(q, st.sigma, cfg, grid_n, t);
}

}  // namespace vortex
