#pragma once
// Exact discrete optimal transport. The balanced transportation LP is solved
// by successive shortest augmenting paths with potentials (Dijkstra on
// nonnegative reduced costs), which is exact at desk scale and doubles as the
// repo's oracle. A semi-discrete front end handles the case of a large
// quadrature cloud against a few atoms: consolidate, solve the LP on groups,
// lift the atom-side duals to the full cloud and repair the marginals on the
// cheapest margins. The lifted primal/dual pair certifies the value.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <stdexcept>
#include <vector>

#include "vortex/measure.hpp"

namespace vortex {

using GroundCost = std::function<double(double, double, double, double)>;

inline GroundCost half_quadratic_cost() {
  return [](double ax, double ay, double bx, double by) {
    const double dx = ax - bx, dy = ay - by;
    return 0.5 * (dx * dx + dy * dy);
  };
}

inline GroundCost euclidean_cost() {
  return [](double ax, double ay, double bx, double by) {
    return std::hypot(ax - bx, ay - by);
  };
}

struct PlanEntry {
  int from = 0;
  int to = 0;
  double mass = 0.0;
};

struct OtSolution {
  double value = 0.0;                // sum of mass * ground cost over the plan
  std::vector<PlanEntry> plan;
  std::vector<double> dual_a;        // feasible: dual_a[i] + dual_b[j] <= c_ij
  std::vector<double> dual_b;
  double dual_value = 0.0;
  double certificate = 0.0;          // primal - dual, >= 0, ~0 at optimality
};

// Exact optimal transport between weighted clouds with equal total mass.
// Throws on unbalanced marginals or when the instance exceeds the size cap.
inline OtSolution exact_discrete_ot(const Cloud& a, const Cloud& b, const GroundCost& cost,
                                    int cap = 4096) {
  if (a.size() == 0 || b.size() == 0) throw std::invalid_argument("ot: empty cloud");
  if (a.size() + b.size() > cap) throw std::invalid_argument("ot: size cap exceeded");
  const double tot_a = a.total_weight(), tot_b = b.total_weight();
  if (std::abs(tot_a - tot_b) > 1e-12 * std::max(1.0, std::abs(tot_a)))
    throw std::invalid_argument("ot: unbalanced masses");

  // compress away zero-weight atoms
  std::vector<int> ia, ib;
  for (int i = 0; i < a.size(); ++i)
    if (a.w[i] > 0.0) ia.push_back(i);
  for (int j = 0; j < b.size(); ++j)
    if (b.w[j] > 0.0) ib.push_back(j);
  const int n = static_cast<int>(ia.size());
  const int m = static_cast<int>(ib.size());
  if (n == 0 || m == 0) throw std::invalid_argument("ot: no positive mass");

  std::vector<double> cmat(static_cast<size_t>(n) * m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      cmat[static_cast<size_t>(i) * m + j] =
          cost(a.x[ia[i]], a.y[ia[i]], b.x[ib[j]], b.y[ib[j]]);

  std::vector<double> supply(n), demand(m);
  for (int i = 0; i < n; ++i) supply[i] = a.w[ia[i]];
  for (int j = 0; j < m; ++j) demand[j] = b.w[ib[j]];
  double remaining = 0.0;
  for (double v : demand) remaining += v;

  // flow lists per source and a mirror per sink
  std::vector<std::vector<std::pair<int, double>>> flow(n);  // (j, mass)
  std::vector<std::vector<int>> sink_src(m);                 // sources with positive flow

  auto flow_ref = [&](int i, int j) -> double& {
    for (auto& e : flow[i])
      if (e.first == j) return e.second;
    flow[i].push_back({j, 0.0});
    bool seen = false;
    for (int s : sink_src[j])
      if (s == i) {
        seen = true;
        break;
      }
    if (!seen) sink_src[j].push_back(i);
    return flow[i].back().second;
  };

  const int V = n + m;  // node ids: sources 0..n-1, sinks n..n+m-1
  std::vector<double> pot(V, 0.0), dist(V);
  std::vector<int> parent(V);  // predecessor node on the shortest path
  const double inf = std::numeric_limits<double>::infinity();
  const double mass_eps = 0.0;  // exact zeroing; deltas are strictly positive
  const double stop_eps = 1e-12 * std::max(1.0, tot_a);

  long guard = 50L * (n + m) + 1000;
  while (remaining > stop_eps) {
    if (--guard < 0) throw std::runtime_error("ot: augmentation guard exceeded");
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(parent.begin(), parent.end(), -1);
    using QE = std::pair<double, int>;
    std::priority_queue<QE, std::vector<QE>, std::greater<QE>> pq;
    for (int i = 0; i < n; ++i)
      if (supply[i] > mass_eps) {
        dist[i] = 0.0;
        pq.push({0.0, i});
      }
    int target = -1;
    std::vector<char> done(V, 0);
    while (!pq.empty()) {
      auto [d, x] = pq.top();
      pq.pop();
      if (done[x]) continue;
      done[x] = 1;
      if (x >= n && demand[x - n] > mass_eps) {
        target = x;
        break;
      }
      if (x < n) {
        const int i = x;
        const double base = d + pot[i];
        for (int j = 0; j < m; ++j) {
          if (done[n + j]) continue;
          const double rc = cmat[static_cast<size_t>(i) * m + j] + base - pot[n + j];
          if (rc < dist[n + j]) {
            dist[n + j] = rc;
            parent[n + j] = i;
            pq.push({rc, n + j});
          }
        }
      } else {
        const int j = x - n;
        for (int i : sink_src[j]) {
          if (done[i]) continue;
          double f = 0.0;
          for (auto& e : flow[i])
            if (e.first == j) {
              f = e.second;
              break;
            }
          if (f <= mass_eps) continue;
          const double rc = d - cmat[static_cast<size_t>(i) * m + j] + pot[n + j] - pot[i];
          if (rc < dist[i]) {
            dist[i] = rc;
            parent[i] = x;
            pq.push({rc, i});
          }
        }
      }
    }
    if (target < 0) {
      if (remaining <= 1e-10 * std::max(1.0, tot_a)) break;  // exhausted up to rounding
      throw std::runtime_error("ot: no augmenting path (unbalanced instance)");
    }
    const double dt = dist[target];
    for (int x = 0; x < V; ++x) pot[x] += std::min(dist[x], dt);

    // walk back to a source, collect bottleneck
    double delta = demand[target - n];
    int x = target;
    while (parent[x] != -1) {
      const int px = parent[x];
      if (x >= n) {
        // forward arc px -> x, unlimited capacity
      } else {
        // backward arc (x, px-n) carries flow
        for (auto& e : flow[x])
          if (e.first == px - n) delta = std::min(delta, e.second);
      }
      x = px;
    }
    delta = std::min(delta, supply[x]);
    // apply
    int y = target;
    while (parent[y] != -1) {
      const int py = parent[y];
      if (y >= n)
        flow_ref(py, y - n) += delta;
      else
        flow_ref(y, py - n) -= delta;
      y = py;
    }
    supply[y] -= delta;
    demand[target - n] -= delta;
    remaining -= delta;
  }

  OtSolution sol;
  sol.dual_a.assign(a.size(), 0.0);
  sol.dual_b.assign(b.size(), 0.0);
  for (int i = 0; i < n; ++i) sol.dual_a[ia[i]] = -pot[i];
  for (int j = 0; j < m; ++j) sol.dual_b[ib[j]] = pot[n + j];
  for (int i = 0; i < n; ++i)
    for (auto& e : flow[i])
      if (e.second > mass_eps) {
        sol.plan.push_back({ia[i], ib[e.first], e.second});
        sol.value += e.second * cmat[static_cast<size_t>(i) * m + e.first];
      }
  for (int i = 0; i < n; ++i) sol.dual_value += sol.dual_a[ia[i]] * a.w[ia[i]];
  for (int j = 0; j < m; ++j) sol.dual_value += sol.dual_b[ib[j]] * b.w[ib[j]];
  sol.certificate = sol.value - sol.dual_value;
  return sol;
}

inline double w1_distance(const Cloud& a, const Cloud& b, int cap = 4096) {
  return exact_discrete_ot(a, b, euclidean_cost(), cap).value;
}

inline double w2_squared(const Cloud& a, const Cloud& b, int cap = 4096) {
  return 2.0 * exact_discrete_ot(a, b, half_quadratic_cost(), cap).value;
}

// Consolidates a cloud onto per-group barycenters. Groups are tiles of the
// bounding box, optionally refined within the classes given by `hint` (for
// cell-aligned coarsening the hint is the transport-cell index, which keeps
// every group inside one convex cell). Returns at most `budget` groups.
inline Cloud consolidate_cloud(const Cloud& c, int budget, const std::vector<int>* hint = nullptr) {
  if (c.size() == 0) return c;
  if (budget < 1) throw std::invalid_argument("consolidate_cloud: budget < 1");
  if (c.size() <= budget && hint == nullptr) return c;
  int nclass = 1;
  if (hint) {
    for (int h : *hint) nclass = std::max(nclass, h + 1);
  }
  const double total = c.total_weight();

  // class bounding boxes and masses
  std::vector<double> x0(nclass, 1e300), x1(nclass, -1e300), y0(nclass, 1e300), y1(nclass, -1e300);
  std::vector<double> cls_mass(nclass, 0.0);
  std::vector<int> cls(c.size(), 0);
  for (int i = 0; i < c.size(); ++i) {
    const int h = hint ? (*hint)[i] : 0;
    cls[i] = h;
    cls_mass[h] += c.w[i];
    x0[h] = std::min(x0[h], c.x[i]);
    x1[h] = std::max(x1[h], c.x[i]);
    y0[h] = std::min(y0[h], c.y[i]);
    y1[h] = std::max(y1[h], c.y[i]);
  }
  // tiles per class, proportional to mass; sum of nt^2 stays below budget
  std::vector<int> nt(nclass, 0);
  for (int h = 0; h < nclass; ++h)
    if (cls_mass[h] > 0.0)
      nt[h] = std::max(1, static_cast<int>(std::floor(std::sqrt(budget * cls_mass[h] / total))));

  struct Acc {
    double w = 0.0, sx = 0.0, sy = 0.0;
  };
  std::vector<std::vector<Acc>> acc(nclass);
  for (int h = 0; h < nclass; ++h) acc[h].assign(static_cast<size_t>(nt[h]) * nt[h], Acc{});
  for (int i = 0; i < c.size(); ++i) {
    const int h = cls[i];
    const int k = nt[h];
    const double ex = x1[h] - x0[h], ey = y1[h] - y0[h];
    int tx = ex > 0.0 ? std::min(k - 1, static_cast<int>((c.x[i] - x0[h]) / ex * k)) : 0;
    int ty = ey > 0.0 ? std::min(k - 1, static_cast<int>((c.y[i] - y0[h]) / ey * k)) : 0;
    Acc& A = acc[h][static_cast<size_t>(ty) * k + tx];
    A.w += c.w[i];
    A.sx += c.w[i] * c.x[i];
    A.sy += c.w[i] * c.y[i];
  }
  Cloud out;
  for (int h = 0; h < nclass; ++h)
    for (const Acc& A : acc[h])
      if (A.w > 0.0) out.push(A.sx / A.w, A.sy / A.w, A.w);
  return out;
}

struct SemiDiscreteW2 {
  double w2sq = 0.0;        // from the repaired primal (a feasible coupling)
  double w2sq_dual = 0.0;   // from the duals, lower bound
  double certificate = 0.0;
  std::vector<double> atom_duals;
  std::vector<int> assign;  // primary atom per cloud node
};

// W2^2 between a large cloud and a small atom set: dual ascent on the atom
// potentials over the full cloud, then the marginal residuals (which stall
// near the largest single node weight) are repaired along the cheapest
// reassignment margins. The repaired assignment is a genuine coupling, so the
// primal is an upper bound and the duals a lower bound; the certificate
// reports their difference.
inline SemiDiscreteW2 w2_squared_to_atoms(const Cloud& cloud, const Cloud& atoms,
                                          const std::vector<double>* warm_duals = nullptr) {
  const int m = atoms.size();
  if (m == 0 || cloud.size() == 0) throw std::invalid_argument("w2_squared_to_atoms: empty input");
  const double tot_c = cloud.total_weight(), tot_a = atoms.total_weight();
  if (std::abs(tot_c - tot_a) > 1e-12 * std::max(1.0, tot_a))
    throw std::invalid_argument("w2_squared_to_atoms: unbalanced masses");

  const int N = cloud.size();
  std::vector<double> beta(m, 0.0);
  if (warm_duals && static_cast<int>(warm_duals->size()) == m) beta = *warm_duals;
  auto halfc = [&](int nidx, int j) {
    const double dx = cloud.x[nidx] - atoms.x[j];
    const double dy = cloud.y[nidx] - atoms.y[j];
    return 0.5 * (dx * dx + dy * dy);
  };

  SemiDiscreteW2 out;
  out.assign.assign(N, 0);
  std::vector<double> alpha(N, 0.0);
  std::vector<double> mass(m, 0.0);

  // dual objective D(beta) = sum_n w_n min_j (c_nj - beta_j) + <atom w, beta>,
  // concave with supergradient (atom w - power-cell mass)
  auto lift = [&](const std::vector<double>& b, std::vector<int>& asg, std::vector<double>& al,
                  std::vector<double>& ms) {
    std::fill(ms.begin(), ms.end(), 0.0);
    double dval = 0.0;
    for (int nidx = 0; nidx < N; ++nidx) {
      int best = 0;
      double bestv = halfc(nidx, 0) - b[0];
      for (int j = 1; j < m; ++j) {
        const double v = halfc(nidx, j) - b[j];
        if (v < bestv) {
          bestv = v;
          best = j;
        }
      }
      asg[nidx] = best;
      al[nidx] = bestv;
      ms[best] += cloud.w[nidx];
      dval += cloud.w[nidx] * bestv;
    }
    for (int j = 0; j < m; ++j) dval += atoms.w[j] * b[j];
    return dval;
  };
  double D = lift(beta, out.assign, alpha, mass);

  double wmax = 0.0;
  for (int nidx = 0; nidx < N; ++nidx) wmax = std::max(wmax, cloud.w[nidx]);
  double spread = 0.0;
  for (int j = 1; j < m; ++j)
    spread = std::max(spread, std::hypot(atoms.x[j] - atoms.x[0], atoms.y[j] - atoms.y[0]));
  double eta = std::max(0.5 * spread * spread, 1e-6);
  const double eta_max = 1e6 * eta;
  std::vector<double> beta_try(m), alpha_try(N), mass_try(m);
  std::vector<int> assign_try(N);
  for (int it = 0; it < 1000; ++it) {
    std::vector<double> grad(m);
    double g2 = 0.0, ginf = 0.0;
    for (int j = 0; j < m; ++j) {
      grad[j] = atoms.w[j] - mass[j];
      g2 += grad[j] * grad[j];
      ginf = std::max(ginf, std::abs(grad[j]));
    }
    if (ginf <= 1.5 * wmax) break;
    bool accepted = false;
    for (int half = 0; half < 60; ++half) {
      for (int j = 0; j < m; ++j) beta_try[j] = beta[j] + eta * grad[j];
      const double Dtry = lift(beta_try, assign_try, alpha_try, mass_try);
      if (Dtry >= D + 0.1 * eta * g2 - 1e-15 * (1.0 + std::abs(D))) {
        beta.swap(beta_try);
        alpha.swap(alpha_try);
        mass.swap(mass_try);
        out.assign.swap(assign_try);
        D = Dtry;
        accepted = true;
        if (half == 0) eta = std::min(2.0 * eta, eta_max);
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) break;  // subgradient kink; repair finishes the job
  }

  double primal = 0.0;
  for (int nidx = 0; nidx < N; ++nidx) primal += cloud.w[nidx] * halfc(nidx, out.assign[nidx]);

  // repair marginals: move mass from over-full to under-full atoms, cheapest
  // reassignment margins first
  std::vector<double> resid(m);
  for (int j = 0; j < m; ++j) resid[j] = mass[j] - atoms.w[j];
  std::vector<double> moved(N, 0.0);
  using Cand = std::pair<double, std::pair<int, int>>;  // (margin, (node, to))
  std::priority_queue<Cand, std::vector<Cand>, std::greater<Cand>> heap;
  const double tol = 1e-14 * std::max(1.0, tot_a);
  bool any_donor = false;
  for (int j = 0; j < m; ++j) any_donor = any_donor || resid[j] > tol;
  if (any_donor) {
    for (int nidx = 0; nidx < N; ++nidx) {
      const int from = out.assign[nidx];
      if (resid[from] <= tol) continue;
      for (int j = 0; j < m; ++j) {
        if (j == from || resid[j] >= -tol) continue;
        const double margin = (halfc(nidx, j) - beta[j]) - alpha[nidx];
        heap.push({margin, {nidx, j}});
      }
    }
    while (!heap.empty()) {
      bool done = true;
      for (int j = 0; j < m; ++j)
        if (resid[j] > tol) done = false;
      if (done) break;
      auto [margin, nj] = heap.top();
      heap.pop();
      const int nidx = nj.first, to = nj.second;
      const int from = out.assign[nidx];
      if (resid[from] <= tol || resid[to] >= -tol) continue;
      const double avail = cloud.w[nidx] - moved[nidx];
      if (avail <= 0.0) continue;
      const double delta = std::min({avail, resid[from], -resid[to]});
      moved[nidx] += delta;
      resid[from] -= delta;
      resid[to] += delta;
      primal += delta * (halfc(nidx, to) - halfc(nidx, from));
    }
  }

  double dual = 0.0;
  for (int nidx = 0; nidx < N; ++nidx) dual += cloud.w[nidx] * alpha[nidx];
  for (int j = 0; j < m; ++j) dual += atoms.w[j] * beta[j];

  out.w2sq = 2.0 * primal;
  out.w2sq_dual = 2.0 * dual;
  out.certificate = out.w2sq - out.w2sq_dual;
  out.atom_duals = beta;
  return out;
}

}  // namespace vortex
