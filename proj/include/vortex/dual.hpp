#pragma once
// Dual solve for the free-boundary problem: the potential P is never stored
// on a grid, it is the exact c-transform of the finite vector Psi over the
// sigma atoms, so the transport map is the argmax-atom map with zero
// interpolation error. The free boundary minimizes the height functional S
// per height, monotonicity is enforced by isotonic projection, and Psi climbs
// the concave dual objective by supergradient steps with backtracking.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "vortex/boundary.hpp"
#include "vortex/config.hpp"
#include "vortex/core.hpp"
#include "vortex/measure.hpp"
#include "vortex/ot.hpp"

namespace vortex {

// ---------------------------------------------------------------------------
// Lazy potential P(p, m) = max_i [ c(p, m, q_i) - Psi_i ].

inline double potential_P(const Cloud& sigma, const std::vector<double>& psi, double s, double z,
                          double m) {
  if (sigma.size() == 0) throw std::invalid_argument("potential_P: empty atom set");
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < sigma.size(); ++i) {
    const double v = s * sigma.x[i] + z * sigma.y[i] / m - psi[i];
    if (v > best) best = v;
  }
  return best;
}

// Argmax atom of the c-transform, ties broken by lowest index.
inline int argmax_atom(const Cloud& sigma, const std::vector<double>& psi, double s, double z,
                       double m) {
  if (sigma.size() == 0) throw std::invalid_argument("argmax_atom: empty atom set");
  int best = 0;
  double bestv = s * sigma.x[0] + z * sigma.y[0] / m - psi[0];
  for (int i = 1; i < sigma.size(); ++i) {
    const double v = s * sigma.x[i] + z * sigma.y[i] / m - psi[i];
    if (v > bestv) {
      bestv = v;
      best = i;
    }
  }
  return best;
}

// Same argmax in the (s, phi) plane where the affine structure is explicit.
inline int argmax_atom_fplane(const Cloud& sigma, const std::vector<double>& psi, double s,
                              double phi) {
  int best = 0;
  double bestv = s * sigma.x[0] + phi * sigma.y[0] - psi[0];
  for (int i = 1; i < sigma.size(); ++i) {
    const double v = s * sigma.x[i] + phi * sigma.y[i] - psi[i];
    if (v > bestv) {
      bestv = v;
      best = i;
    }
  }
  return best;
}

// c-transform in the other direction: Psi(q) = sup over a (s, z, m) grid of
// c(p, m, q) - P(p, m). Used for conjugacy checks, not in the solve loop.
inline double c_transform_of_P(const std::function<double(double, double, double)>& P, double ups,
                               double zed, const Frame& fr, const AmbientProfile& ambient,
                               double H, int grid = 128) {
  double best = -std::numeric_limits<double>::infinity();
  const double s_hi = fr.scan_cap();
  for (int a = 0; a <= grid; ++a)
    for (int b = 0; b <= grid; ++b) {
      const double s = s_hi * a / grid;
      const double z = H * b / grid;
      const double m = ambient.theta0(z);
      best = std::max(best, cost(s, z, m, ups, zed) - P(s, z, m));
    }
  return best;
}

// ---------------------------------------------------------------------------
// Upper envelope of the affine functions s -> s*Upsilon_i + phi*Z_i - Psi_i
// on [0, s_hi]. Gives P(., z, theta0(z)) in closed form per piece.

struct HeightEnvelope {
  std::vector<double> slope, icept;  // active line per piece
  std::vector<int> atom;
  std::vector<double> brk;  // piece k lives on [brk[k], brk[k+1]]
  double s_hi = 0.0;

  int pieces() const { return static_cast<int>(atom.size()); }

  int piece_at(double s) const {
    int lo = 0, hi = pieces() - 1;
    while (lo < hi) {
      const int mid = (lo + hi + 1) / 2;
      if (brk[mid] <= s)
        lo = mid;
      else
        hi = mid - 1;
    }
    return lo;
  }

  double value(double s) const {
    const int k = piece_at(s);
    return slope[k] * s + icept[k];
  }

  static HeightEnvelope build(const Cloud& sigma, const std::vector<double>& psi, double phi,
                              double s_hi) {
    const int n = sigma.size();
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (sigma.x[a] != sigma.x[b]) return sigma.x[a] < sigma.x[b];
      const double ba = phi * sigma.y[a] - psi[a];
      const double bb = phi * sigma.y[b] - psi[b];
      if (ba != bb) return ba < bb;
      return a > b;  // equal lines: keep the lowest index (processed last wins below)
    });

    std::vector<double> sa, sb;  // stack of (slope, intercept)
    std::vector<int> sid;
    auto cross = [](double a1, double b1, double a2, double b2) {
      return (b1 - b2) / (a2 - a1);
    };
    for (int oi = 0; oi < n; ++oi) {
      const int i = order[oi];
      const double a = sigma.x[i];
      const double b = phi * sigma.y[i] - psi[i];
      if (!sa.empty() && sa.back() == a) {
        if (sb.back() >= b && !(sb.back() == b)) continue;
        if (sb.back() == b && sid.back() < i) continue;
        sa.pop_back();
        sb.pop_back();
        sid.pop_back();
      }
      while (sa.size() >= 2) {
        const size_t t = sa.size() - 1;
        if (cross(sa[t - 1], sb[t - 1], a, b) <= cross(sa[t - 1], sb[t - 1], sa[t], sb[t])) {
          sa.pop_back();
          sb.pop_back();
          sid.pop_back();
        } else {
          break;
        }
      }
      sa.push_back(a);
      sb.push_back(b);
      sid.push_back(i);
    }

    HeightEnvelope env;
    env.s_hi = s_hi;
    // clip to [0, s_hi]
    std::vector<double> xs(sa.size() + 1);
    xs[0] = -std::numeric_limits<double>::infinity();
    for (size_t k = 1; k < sa.size(); ++k) xs[k] = cross(sa[k - 1], sb[k - 1], sa[k], sb[k]);
    xs[sa.size()] = std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < sa.size(); ++k) {
      const double lo = std::max(0.0, xs[k]);
      const double hi = std::min(s_hi, xs[k + 1]);
      if (hi <= lo) continue;
      if (!env.brk.empty() && env.atom.back() == sid[k]) continue;
      env.slope.push_back(sa[k]);
      env.icept.push_back(sb[k]);
      env.atom.push_back(sid[k]);
      env.brk.push_back(env.brk.empty() ? 0.0 : lo);
    }
    if (env.atom.empty()) throw std::runtime_error("HeightEnvelope: empty envelope");
    env.brk.push_back(s_hi);
    return env;
  }
};

// ---------------------------------------------------------------------------
// The height functional S(rho, z) = int_0^rho (f0 - P) density ds and its
// derivative. Two backends: exact piecewise antiderivatives when P is the
// envelope of affine functions, and adaptive Simpson for arbitrary P.

class EnvelopeS {
 public:
  EnvelopeS(const HeightEnvelope& env, const Frame& fr) : env_(env), fr_(fr) {
    cum_.assign(env.pieces() + 1, 0.0);
    for (int k = 0; k < env.pieces(); ++k)
      cum_[k + 1] = cum_[k] + primitive(k, env.brk[k + 1]) - primitive(k, env.brk[k]);
  }

  double S(double rho) const {
    if (rho <= 0.0) return 0.0;
    rho = std::min(rho, env_.s_hi);
    const int k = env_.piece_at(rho);
    return cum_[k] + primitive(k, rho) - primitive(k, env_.brk[k]);
  }

  double Sprime(double rho) const {
    return (fr_.f0(rho) - env_.value(rho)) * fr_.density(rho);
  }

 private:
  double primitive(int k, double s) const {
    return fr_.int_f0_density(s) - env_.slope[k] * fr_.int_s_density(s) -
           env_.icept[k] * fr_.int_density(s);
  }
  const HeightEnvelope& env_;
  Frame fr_;
  std::vector<double> cum_;
};

using PotentialEval = std::function<double(double s, double z, double m)>;

namespace detail {
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double fa, double fm, double fb, double whole, double tol,
                               int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}
}  // namespace detail

// S by adaptive quadrature for an arbitrary potential evaluator.
inline double S_functional(const PotentialEval& P, double rho_bar, double z, double m,
                           const Frame& fr) {
  if (rho_bar < 0.0 || rho_bar > fr.scan_cap() + 1e-15)
    throw std::domain_error("S_functional: rho too close to the pole");
  if (rho_bar == 0.0) return 0.0;
  auto f = [&](double s) { return (fr.f0(s) - P(s, z, m)) * fr.density(s); };
  const double fa = f(0.0), fb = f(rho_bar), fm = f(0.5 * rho_bar);
  const double whole = rho_bar / 6.0 * (fa + 4.0 * fm + fb);
  return detail::adaptive_simpson(f, 0.0, rho_bar, fa, fm, fb, whole,
                                  1e-13 * (1.0 + std::abs(whole)), 40);
}

inline double S_derivative(const PotentialEval& P, double rho_bar, double z, double m,
                           const Frame& fr) {
  if (rho_bar < 0.0 || rho_bar > fr.scan_cap() + 1e-15)
    throw std::domain_error("S_derivative: rho too close to the pole");
  return (fr.f0(rho_bar) - P(rho_bar, z, m)) * fr.density(rho_bar);
}

// Global minimizer of S(., z) over [0, scan cap]: coarse scan, then bisection
// on S' when the best bracket straddles a sign change (the boundary condition
// f0(rho) = P(rho) is then met to near machine precision), golden section
// otherwise. SEval provides S and Sprime.
template <class SEval>
double minimize_S_generic(const SEval& se, const Frame& fr, int scan_points) {
  const double cap = fr.scan_cap();
  const int n = std::max(8, scan_points);
  double best_s = 0.0, best_v = 0.0;  // S(0) = 0
  for (int k = 1; k <= n; ++k) {
    const double s = cap * k / n;
    const double v = se.S(s);
    if (v < best_v) {
      best_v = v;
      best_s = s;
    }
  }
  const double step = cap / n;
  double lo = std::max(0.0, best_s - step);
  double hi = std::min(cap, best_s + step);
  if (best_v == 0.0 && best_s == 0.0) {
    // S nondecreasing from 0 at scan scale; still probe the first panel
    hi = step;
  }
  const double slo = se.Sprime(std::min(lo + 1e-15 * cap, cap));
  const double shi = se.Sprime(hi);
  double cand;
  if (slo < 0.0 && shi > 0.0) {
    double a = lo, b = hi;
    for (int it = 0; it < 120 && b - a > 1e-17 * (1.0 + cap); ++it) {
      const double mid = 0.5 * (a + b);
      if (se.Sprime(mid) < 0.0)
        a = mid;
      else
        b = mid;
    }
    cand = 0.5 * (a + b);
  } else {
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo, b = hi;
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = se.S(x1), f2 = se.S(x2);
    for (int it = 0; it < 90; ++it) {
      if (f1 < f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - gr * (b - a);
        f1 = se.S(x1);
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + gr * (b - a);
        f2 = se.S(x2);
      }
    }
    cand = 0.5 * (a + b);
  }
  return se.S(cand) < 0.0 ? cand : 0.0;
}

// Generic-potential version of the per-height minimization (test surface).
inline double minimize_S_z(const PotentialEval& P, double z, double m, const Frame& fr,
                           int scan_points = 512) {
  struct GenericS {
    const PotentialEval* P;
    double z, m;
    const Frame* fr;
    int n;
    std::vector<double> cum, grid;
    GenericS(const PotentialEval& Pe, double zz, double mm, const Frame& f, int nn)
        : P(&Pe), z(zz), m(mm), fr(&f), n(nn) {
      // cumulative Gauss-Legendre panels over the scan grid
      static const double gx[4] = {-0.8611363115940526, -0.3399810435848563,
                                   0.3399810435848563, 0.8611363115940526};
      static const double gw[4] = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                                   0.3478548451374538};
      const double cap = fr->scan_cap();
      grid.resize(n + 1);
      cum.assign(n + 1, 0.0);
      for (int k = 0; k <= n; ++k) grid[k] = cap * k / n;
      for (int k = 0; k < n; ++k) {
        const double a = grid[k], b = grid[k + 1];
        double acc = 0.0;
        for (int q = 0; q < 4; ++q) {
          const double s = 0.5 * (a + b) + 0.5 * (b - a) * gx[q];
          acc += gw[q] * (fr->f0(s) - (*P)(s, z, m)) * fr->density(s);
        }
        cum[k + 1] = cum[k] + 0.5 * (b - a) * acc;
      }
    }
    double S(double rho) const {
      if (rho <= 0.0) return 0.0;
      const double cap = fr->scan_cap();
      rho = std::min(rho, cap);
      const int k = std::min(n - 1, static_cast<int>(rho / cap * n));
      static const double gx[4] = {-0.8611363115940526, -0.3399810435848563,
                                   0.3399810435848563, 0.8611363115940526};
      static const double gw[4] = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                                   0.3478548451374538};
      const double a = grid[k];
      double acc = 0.0;
      for (int q = 0; q < 4; ++q) {
        const double s = 0.5 * (a + rho) + 0.5 * (rho - a) * gx[q];
        acc += gw[q] * (fr->f0(s) - (*P)(s, z, m)) * fr->density(s);
      }
      return cum[k] + 0.5 * (rho - a) * acc;
    }
    double Sprime(double rho) const {
      return (fr->f0(rho) - (*P)(rho, z, m)) * fr->density(rho);
    }
  };
  GenericS se(P, z, m, fr, scan_points);
  return minimize_S_generic(se, fr, scan_points);
}

// ---------------------------------------------------------------------------
// One full evaluation of the dual objective at a given Psi: re-minimized
// monotone boundary, reference-measure quadrature, cell assignment, masses,
// and the accumulated integrals that J, K and the gap share.

struct DualEvaluation {
  FreeBoundary boundary;
  ReferenceMeasure quad;
  std::vector<int> assign;       // per quadrature node
  std::vector<double> cell_mass; // per atom
  std::vector<double> bar_s, bar_phi;  // weighted sums per atom (divide by mass)
  double mass = 0.0;             // total quadrature mass
  double H_node = 0.0;           // sum w (f0 - P), unnormalized
  double int_P = 0.0;            // sum w P
  double int_f0 = 0.0;           // sum w f0
  double int_sphi2 = 0.0;        // sum w (s^2 + phi(z)^2)
  double J_internal = 0.0;       // -<w, psi> + H_node, objective of the line search
  std::vector<double> raw_rho;   // pre-projection minimizers
  std::vector<double> hessian;   // d cell_mass / d psi, row-major n x n, optional
};

inline DualEvaluation evaluate_dual(const Cloud& sigma, const std::vector<double>& psi,
                                    const ModelConfig& cfg, bool with_hessian = false) {
  const Frame fr = cfg.frame();
  const int n_z = cfg.solver.n_z;
  const int n = sigma.size();
  DualEvaluation ev;
  if (with_hessian) ev.hessian.assign(static_cast<size_t>(n) * n, 0.0);
  ev.boundary.z_grid = uniform_z_grid(cfg.H, n_z);
  ev.raw_rho.resize(n_z);
  std::vector<HeightEnvelope> envs;
  envs.reserve(n_z);
  for (int j = 0; j < n_z; ++j) {
    const double phi_j = cfg.ambient.phi(ev.boundary.z_grid[j]);
    envs.push_back(HeightEnvelope::build(sigma, psi, phi_j, fr.scan_cap()));
    const EnvelopeS se(envs[j], fr);
    ev.raw_rho[j] = minimize_S_generic(se, fr, cfg.solver.scan_points);
  }
  ev.boundary.rho = pav_nondecreasing(ev.raw_rho);

  // strip integration: grid cells split at envelope breakpoints, every strip
  // integrated in closed form and assigned to the atom of its affine piece
  const double s_max = ev.boundary.max_value();
  ev.quad.z_grid = ev.boundary.z_grid;
  ev.quad.dz = cfg.H / n_z;
  ev.quad.ds = s_max > 0.0 ? s_max / cfg.solver.n_s : 0.0;
  ev.quad.col_begin.assign(n_z + 1, 0);
  ev.cell_mass.assign(n, 0.0);
  ev.bar_s.assign(n, 0.0);
  ev.bar_phi.assign(n, 0.0);

  const double dz = ev.quad.dz;
  for (int j = 0; j < n_z; ++j) {
    ev.quad.col_begin[j] = ev.quad.size();
    const double rho_j = ev.boundary.rho[j];
    if (!(rho_j > 0.0)) continue;
    const HeightEnvelope& env = envs[j];
    const double phi_j = cfg.ambient.phi(ev.boundary.z_grid[j]);
    int piece = 0;
    double a = 0.0;
    int k = 1;  // next grid line index
    while (a < rho_j) {
      while (piece + 1 < env.pieces() && env.brk[piece + 1] <= a) ++piece;
      double b = rho_j;
      if (piece + 1 < env.pieces()) b = std::min(b, env.brk[piece + 1]);
      if (ev.quad.ds > 0.0) {
        while (k * ev.quad.ds <= a + 1e-18 * s_max) ++k;
        b = std::min(b, k * ev.quad.ds);
      }
      const double dmass = fr.int_density(b) - fr.int_density(a);
      if (dmass > 0.0) {
        const double dIs = fr.int_s_density(b) - fr.int_s_density(a);
        const double dIf0 = fr.int_f0_density(b) - fr.int_f0_density(a);
        const double centroid = dIs / dmass;
        const double w = dmass * dz;
        const int atom = env.atom[piece];
        const double Pc = env.slope[piece] * centroid + env.icept[piece];
        ev.quad.s.push_back(centroid);
        ev.quad.col.push_back(j);
        ev.quad.w.push_back(w);
        ev.assign.push_back(atom);
        ev.cell_mass[atom] += w;
        ev.bar_s[atom] += dz * dIs;
        ev.bar_phi[atom] += w * phi_j;
        const double strip_f0 = dz * dIf0;
        const double strip_P = w * Pc;  // exact: P is affine on the strip
        ev.H_node += strip_f0 - strip_P;
        ev.int_P += strip_P;
        ev.int_f0 += strip_f0;
        ev.int_sphi2 += w * (centroid * centroid + phi_j * phi_j);
      }
      a = b;
    }
    if (with_hessian) {
      // mass-exchange rates: across cell interfaces inside the column and
      // through the free boundary response d rho / d psi
      for (int k = 1; k < env.pieces(); ++k) {
        const double sb = env.brk[k];
        if (sb <= 0.0 || sb >= rho_j) continue;
        const double dslope = env.slope[k] - env.slope[k - 1];
        if (!(dslope > 1e-14)) continue;
        const double rate = fr.density(sb) * dz / dslope;
        const int ia = env.atom[k - 1], ib = env.atom[k];
        ev.hessian[static_cast<size_t>(ia) * n + ib] += rate;
        ev.hessian[static_cast<size_t>(ib) * n + ia] += rate;
        ev.hessian[static_cast<size_t>(ia) * n + ia] -= rate;
        ev.hessian[static_cast<size_t>(ib) * n + ib] -= rate;
      }
      if (rho_j < (1.0 - 1e-9) * fr.scan_cap()) {
        const int pb = env.piece_at(rho_j);
        const double denom = fr.f0_prime(rho_j) - env.slope[pb];
        if (denom > 1e-12) {
          const int ib = env.atom[pb];
          ev.hessian[static_cast<size_t>(ib) * n + ib] -= fr.density(rho_j) * dz / denom;
        }
      }
    }
  }
  ev.quad.col_begin[n_z] = ev.quad.size();
  // total mass as the sum of the cell masses, so the balance identity is exact
  for (int i = 0; i < n; ++i) ev.mass += ev.cell_mass[i];
  ev.quad.mass = ev.mass;

  double dot = 0.0;
  for (int i = 0; i < n; ++i) dot += sigma.w[i] * psi[i];
  ev.J_internal = -dot + ev.H_node;
  return ev;
}

namespace detail {
// dense Gaussian elimination with partial pivoting; A is row-major n x n
inline bool solve_dense(std::vector<double> A, std::vector<double> b, int n,
                        std::vector<double>& x) {
  std::vector<int> piv(n);
  for (int c = 0; c < n; ++c) {
    int pr = c;
    for (int r = c + 1; r < n; ++r)
      if (std::abs(A[static_cast<size_t>(r) * n + c]) > std::abs(A[static_cast<size_t>(pr) * n + c]))
        pr = r;
    if (std::abs(A[static_cast<size_t>(pr) * n + c]) < 1e-300) return false;
    if (pr != c) {
      for (int k = 0; k < n; ++k)
        std::swap(A[static_cast<size_t>(c) * n + k], A[static_cast<size_t>(pr) * n + k]);
      std::swap(b[c], b[pr]);
    }
    for (int r = c + 1; r < n; ++r) {
      const double f = A[static_cast<size_t>(r) * n + c] / A[static_cast<size_t>(c) * n + c];
      for (int k = c; k < n; ++k)
        A[static_cast<size_t>(r) * n + k] -= f * A[static_cast<size_t>(c) * n + k];
      b[r] -= f * b[c];
    }
  }
  x.assign(n, 0.0);
  for (int r = n - 1; r >= 0; --r) {
    double acc = b[r];
    for (int k = r + 1; k < n; ++k) acc -= A[static_cast<size_t>(r) * n + k] * x[k];
    x[r] = acc / A[static_cast<size_t>(r) * n + r];
  }
  return true;
}
}  // namespace detail

// ---------------------------------------------------------------------------

struct SolveReport {
  double J = 0.0;
  double K = 0.0;
  double m2 = 0.0;
  double gap = 0.0;
  double boundary_residual = 0.0;
  int iterations = 0;
  bool converged = false;
  double mass = 0.0;
  double w2sq = 0.0;
};

struct SolveError : std::runtime_error {
  SolveReport report;
  explicit SolveError(const std::string& msg, SolveReport rep)
      : std::runtime_error(msg), report(rep) {}
};

struct DualState {
  Cloud sigma;
  std::vector<double> psi;
  FreeBoundary boundary;
  ReferenceMeasure quad;
  std::vector<int> assign;
  std::vector<double> cell_mass;
  double mass = 0.0;
  std::vector<double> raw_rho;

  double P(double s, double z, double m) const { return potential_P(sigma, psi, s, z, m); }
};

inline int cell_assign(const DualState& st, const AmbientProfile& ambient, double s, double z) {
  return argmax_atom(st.sigma, st.psi, s, z, ambient.theta0(z));
}

inline std::pair<double, double> T_map(const DualState& st, const AmbientProfile& ambient,
                                       double s, double z) {
  const int i = cell_assign(st, ambient, s, z);
  return {st.sigma.x[i], st.sigma.y[i]};
}

inline std::vector<double> cell_masses(const DualState& st) { return st.cell_mass; }

// Residual of the boundary optimality condition
// 2 (1 - 2 r0^2 rho) P(rho, z, theta0(z)) = r0^2 Omega^2 on {rho > 0}.
inline double boundary_residual(const DualState& st, const ModelConfig& cfg) {
  double worst = 0.0;
  for (int j = 0; j < st.boundary.size(); ++j) {
    const double rho = st.boundary.rho[j];
    if (rho <= 1e-3) continue;
    const double z = st.boundary.z_grid[j];
    const double P = st.P(rho, z, cfg.ambient.theta0(z));
    const double res = std::abs(2.0 * (1.0 - 2.0 * cfg.r0 * cfg.r0 * rho) * P -
                                cfg.r0 * cfg.r0 * cfg.omega * cfg.omega);
    worst = std::max(worst, res);
  }
  return worst;
}

struct Barycenters {
  std::vector<double> s;     // mean s per cell
  std::vector<double> phi;   // mean phi(z) per cell
  std::vector<double> zbar;  // phi^{-1}(mean phi)
};

inline Barycenters barycenter_selection(const DualState& st, const ModelConfig& cfg) {
  const int n = st.sigma.size();
  Barycenters b;
  b.s.resize(n);
  b.phi.resize(n);
  b.zbar.resize(n);
  std::vector<double> ws(n, 0.0), wphi(n, 0.0);
  for (int k = 0; k < st.quad.size(); ++k) {
    const int i = st.assign[k];
    ws[i] += st.quad.w[k] * st.quad.s[k];
    wphi[i] += st.quad.w[k] * cfg.ambient.phi(st.quad.z_grid[st.quad.col[k]]);
  }
  for (int i = 0; i < n; ++i) {
    if (!(st.cell_mass[i] > 0.0))
      throw std::runtime_error("barycenter_selection: empty cell for atom " + std::to_string(i));
    b.s[i] = ws[i] / st.cell_mass[i];
    b.phi[i] = wphi[i] / st.cell_mass[i];
    b.zbar[i] = cfg.ambient.phi_inverse(b.phi[i], cfg.H);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Objectives. J_objective re-minimizes the boundary and evaluates the height
// term with the exact strip integrals, so its coordinate supergradient is
// exactly (cell_mass_i - w_i).

struct JResult {
  double J = 0.0;
  FreeBoundary boundary;
};

inline JResult J_objective(const Cloud& sigma, const std::vector<double>& psi,
                           const ModelConfig& cfg) {
  DualEvaluation ev = evaluate_dual(sigma, psi, cfg);
  return {ev.J_internal, std::move(ev.boundary)};
}

// K and the duality gap share one quadrature evaluation. All rho-side
// integrals use weights normalized to unit mass, the same normalization that
// feeds the W2 transport problem, so weak duality holds for the computed
// numbers up to solver exactness.
struct GapBreakdown {
  bool feasible = false;  // mass within tolerance of 1
  double mass = 0.0;
  double w2sq = 0.0;
  double int_sphi2 = 0.0;  // int (s^2 + phi^2) d(normalized mu)
  double int_f0 = 0.0;
  double K = std::numeric_limits<double>::infinity();
  double J = 0.0;
  double m2 = 0.0;
  double gap = std::numeric_limits<double>::infinity();
};

inline GapBreakdown gap_from_evaluation(const Cloud& sigma, const std::vector<double>& psi,
                                        const DualEvaluation& ev, const ModelConfig& cfg) {
  GapBreakdown g;
  g.mass = ev.mass;
  g.m2 = second_moment(sigma);
  if (std::abs(ev.mass - 1.0) > 1e-3 || ev.quad.size() == 0) return g;  // K = +inf sentinel
  g.feasible = true;

  Cloud fcloud = f_pushforward(ev.quad, cfg.ambient);
  fcloud.renormalize_exact();
  const SemiDiscreteW2 sd = w2_squared_to_atoms(fcloud, sigma);
  g.w2sq = sd.w2sq;
  g.int_sphi2 = ev.int_sphi2 / ev.mass;
  g.int_f0 = ev.int_f0 / ev.mass;
  g.K = 0.5 * g.w2sq - 0.5 * g.int_sphi2 + g.int_f0;
  double dot = 0.0;
  for (int i = 0; i < sigma.size(); ++i) dot += sigma.w[i] * psi[i];
  g.J = -dot + (ev.int_f0 - ev.int_P) / ev.mass;
  g.gap = g.K - g.J - g.m2;
  return g;
}

// K[sigma](rho): +inf off the unit-mass set, otherwise 1/2 W2^2 against the
// pushforward cloud minus the rho-side integrals.
inline double K_objective(const Cloud& sigma, const FreeBoundary& boundary,
                          const ModelConfig& cfg) {
  const Frame fr = cfg.frame();
  const ReferenceMeasure quad = build_reference_measure(boundary, fr, cfg.solver.n_s);
  if (std::abs(quad.mass - 1.0) > 1e-3 || quad.size() == 0)
    return std::numeric_limits<double>::infinity();
  Cloud fcloud = f_pushforward(quad, cfg.ambient);
  fcloud.renormalize_exact();
  const SemiDiscreteW2 sd = w2_squared_to_atoms(fcloud, sigma);
  double int_sphi2 = 0.0, int_f0 = 0.0;
  for (int k = 0; k < quad.size(); ++k) {
    const double s = quad.s[k];
    const double phi = cfg.ambient.phi(quad.z_grid[quad.col[k]]);
    const double wn = quad.w[k] / quad.mass;
    int_sphi2 += wn * (s * s + phi * phi);
    int_f0 += wn * fr.f0(s);
  }
  return 0.5 * sd.w2sq - 0.5 * int_sphi2 + int_f0;
}

inline GapBreakdown duality_gap(const Cloud& sigma, const DualState& st, const ModelConfig& cfg) {
  DualEvaluation ev = evaluate_dual(sigma, st.psi, cfg);
  return gap_from_evaluation(sigma, st.psi, ev, cfg);
}

// Cell-aligned coarsening of the converged reference measure in the
// (s, phi(z)) plane; every group stays inside one convex transport cell.
inline Cloud discretize_to_atoms(const DualState& st, const ModelConfig& cfg, int max_atoms) {
  Cloud fcloud = f_pushforward(st.quad, cfg.ambient);
  fcloud.renormalize_exact();
  return consolidate_cloud(fcloud, max_atoms, &st.assign);
}

// ---------------------------------------------------------------------------
// Supergradient ascent with backtracking on J. The boundary is re-minimized
// at every evaluation; cell masses against the atom weights are the ascent
// direction and the convergence certificate is the duality gap.

inline std::pair<DualState, SolveReport> solve_dual(const Cloud& sigma_in, const ModelConfig& cfg,
                                                    const std::vector<double>* warm_psi = nullptr) {
  Cloud sigma = sigma_in.merged_duplicates();
  sigma.renormalize_exact();
  check_sigma(sigma, cfg.l);
  const int n = sigma.size();

  std::vector<double> psi(n, 0.0);
  if (warm_psi && static_cast<int>(warm_psi->size()) == n) psi = *warm_psi;

  double wmax = 0.0;
  for (int i = 0; i < n; ++i) wmax = std::max(wmax, sigma.w[i]);
  const double eta0 = 1.0 / wmax;

  double tol_mass = cfg.solver.tol_mass;
  DualEvaluation ev = evaluate_dual(sigma, psi, cfg, true);
  std::vector<double> prev_rho;
  double eta = eta0;
  double eta_newton = 1.0;
  SolveReport rep;

  auto make_state = [&](DualEvaluation& e) {
    DualState st;
    st.sigma = sigma;
    st.psi = psi;
    st.boundary = e.boundary;
    st.quad = e.quad;
    st.assign = e.assign;
    st.cell_mass = e.cell_mass;
    st.mass = e.mass;
    st.raw_rho = e.raw_rho;
    return st;
  };

  for (int iter = 0; iter < cfg.solver.max_iter; ++iter) {
    rep.iterations = iter;
    double res_inf = 0.0;
    for (int i = 0; i < n; ++i) res_inf = std::max(res_inf, std::abs(ev.cell_mass[i] - sigma.w[i]));
    double drho = 0.0;
    if (prev_rho.empty() && iter > 0) drho = std::numeric_limits<double>::infinity();
    if (!prev_rho.empty())
      for (size_t j = 0; j < prev_rho.size(); ++j)
        drho = std::max(drho, std::abs(prev_rho[j] - ev.boundary.rho[j]));

    if (res_inf <= tol_mass && drho <= cfg.solver.tol_rho) {
      const GapBreakdown g = gap_from_evaluation(sigma, psi, ev, cfg);
      if (g.feasible && g.gap <= cfg.solver.tol_gap * (1.0 + std::abs(g.K))) {
        DualState st = make_state(ev);
        rep.J = g.J;
        rep.K = g.K;
        rep.m2 = g.m2;
        rep.gap = g.gap;
        rep.mass = g.mass;
        rep.w2sq = g.w2sq;
        rep.boundary_residual = boundary_residual(st, cfg);
        rep.converged = true;
        return {std::move(st), rep};
      }
      tol_mass = std::max(0.5 * tol_mass, 1e-12);
    }
    prev_rho = ev.boundary.rho;

    std::vector<double> grad(n);
    double grad_sq = 0.0;
    for (int i = 0; i < n; ++i) {
      grad[i] = ev.cell_mass[i] - sigma.w[i];
      grad_sq += grad[i] * grad[i];
    }

    // damped Newton on the mass residuals: the envelope structure gives the
    // exact mass-exchange rates, which gradient ascent alone cannot exploit
    // when atoms are clustered and the interfaces are stiff
    bool accepted = false;
    std::vector<double> psi_try(n);
    std::vector<double> ndir;
    double ndir_dot_grad = 0.0;
    {
      double diag_scale = 0.0;
      for (int i = 0; i < n; ++i)
        diag_scale = std::max(diag_scale, std::abs(ev.hessian[static_cast<size_t>(i) * n + i]));
      std::vector<double> M(static_cast<size_t>(n) * n);
      const double ridge = 1e-9 * diag_scale + 1e-14;
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
          M[static_cast<size_t>(r) * n + c] =
              -ev.hessian[static_cast<size_t>(r) * n + c] + (r == c ? ridge : 0.0);
      if (detail::solve_dense(std::move(M), grad, n, ndir)) {
        for (int i = 0; i < n; ++i) ndir_dot_grad += ndir[i] * grad[i];
        double ninf = 0.0;
        for (double v : ndir) ninf = std::max(ninf, std::abs(v));
        if (ninf > 100.0) {
          for (double& v : ndir) v *= 100.0 / ninf;
          ndir_dot_grad *= 100.0 / ninf;
        }
      }
    }
    if (!ndir.empty() && ndir_dot_grad > 0.0) {
      double etan = eta_newton;
      for (int half = 0; half < 12; ++half) {
        for (int i = 0; i < n; ++i) psi_try[i] = psi[i] + etan * ndir[i];
        DualEvaluation ev_try = evaluate_dual(sigma, psi_try, cfg, true);
        if (ev_try.J_internal >= ev.J_internal + 0.1 * etan * ndir_dot_grad -
                                     1e-14 * (1.0 + std::abs(ev.J_internal))) {
          psi = psi_try;
          ev = std::move(ev_try);
          accepted = true;
          eta_newton = std::min(half == 0 ? 2.0 * etan : etan, 1.0);
          break;
        }
        etan *= 0.5;
      }
    }
    // supergradient fallback with sufficient-increase backtracking; plain
    // non-decrease admits overshoot cycling near the fixed point
    for (int half = 0; !accepted && half < 50; ++half) {
      for (int i = 0; i < n; ++i) psi_try[i] = psi[i] + eta * grad[i];
      DualEvaluation ev_try = evaluate_dual(sigma, psi_try, cfg, true);
      if (ev_try.J_internal >=
          ev.J_internal + 0.1 * eta * grad_sq - 1e-14 * (1.0 + std::abs(ev.J_internal))) {
        psi = psi_try;
        ev = std::move(ev_try);
        accepted = true;
        if (half == 0) eta = std::min(1.5 * eta, eta0);
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) {
      const GapBreakdown g = gap_from_evaluation(sigma, psi, ev, cfg);
      DualState st = make_state(ev);
      rep.J = g.J;
      rep.K = g.K;
      rep.m2 = g.m2;
      rep.gap = g.gap;
      rep.mass = g.mass;
      rep.w2sq = g.w2sq;
      rep.boundary_residual = boundary_residual(st, cfg);
      if (g.feasible && g.gap <= cfg.solver.tol_gap * (1.0 + std::abs(g.K))) {
        rep.converged = true;
        return {std::move(st), rep};
      }
      throw SolveError("solve_dual: line search stalled before reaching tolerances", rep);
    }
  }

  const GapBreakdown g = gap_from_evaluation(sigma, psi, ev, cfg);
  rep.J = g.J;
  rep.K = g.K;
  rep.m2 = g.m2;
  rep.gap = g.gap;
  rep.mass = g.mass;
  rep.iterations = cfg.solver.max_iter;
  throw SolveError("solve_dual: no convergence within max_iter", rep);
}

}  // namespace vortex
