#include <doctest.h>

#include "support.hpp"

using namespace vortex;

TEST_CASE("c-transform of a single atom") {
  Cloud sig;
  sig.push(1.0, 1.0, 1.0);
  std::vector<double> psi{0.0};
  CHECK(potential_P(sig, psi, 0.25, 1.0, 2.0) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(argmax_atom(sig, psi, 0.3, 0.5, 1.0) == 0);
}

TEST_CASE("c-transform shift equivariance") {
  Cloud sig = vtest::four_atoms();
  std::vector<double> psi{0.1, -0.3, 0.2, 0.0};
  std::vector<double> shifted = psi;
  const double kappa = 0.77;
  for (double& v : shifted) v += kappa;
  vtest::Rng rng(5);
  for (int rep = 0; rep < 5; ++rep) {
    const double s = rng.uni(0, 0.45), z = rng.uni(0, 1), m = rng.uni(0.9, 2.1);
    CHECK(potential_P(sig, shifted, s, z, m) ==
          doctest::Approx(potential_P(sig, psi, s, z, m) - kappa).epsilon(1e-13));
  }
}

TEST_CASE("tied transforms break to the lowest index") {
  // boundary-of-domain atoms are allowed in the transform itself; the solver
  // rejects them at load
  Cloud sig;
  sig.push(1.0, 0.0, 0.5);
  sig.push(0.0, 2.0, 0.5);
  std::vector<double> psi{0.0, 0.0};
  // with theta0 = 1: both atoms give value 0.4 at p = (0.4, 0.2)
  CHECK(potential_P(sig, psi, 0.4, 0.2, 1.0) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(argmax_atom(sig, psi, 0.4, 0.2, 1.0) == 0);
}

TEST_CASE("cell assignment dominance and locality") {
  Cloud sig;
  sig.push(1.0, 0.0, 0.5);
  sig.push(0.0, 2.0, 0.5);
  std::vector<double> psi{0.0, 0.0};
  // theta0 == 1 profile
  CHECK(argmax_atom(sig, psi, 0.5, 0.1, 1.0) == 0);
  // raising psi_0 by a large constant hands everything to atom 1
  std::vector<double> psi2{100.0, 0.0};
  CHECK(argmax_atom(sig, psi2, 0.5, 0.1, 1.0) == 1);
  // argmax is locally constant: nearby points in one cell agree
  CHECK(argmax_atom(sig, psi, 0.5, 0.1001, 1.0) == 0);
}

TEST_CASE("conjugacy: P_c stays below psi with equality at a converged state") {
  ModelConfig cfg = vtest::small_config(96);
  Cloud sig = vtest::four_atoms();
  auto [st, rep] = solve_dual(sig, cfg);
  auto P = [&](double s, double z, double m) { return potential_P(st.sigma, st.psi, s, z, m); };
  for (int i = 0; i < sig.size(); ++i) {
    const double back =
        c_transform_of_P(P, st.sigma.x[i], st.sigma.y[i], cfg.frame(), cfg.ambient, cfg.H, 160);
    CHECK(back <= st.psi[i] + 1e-9);
    CHECK(back >= st.psi[i] - 1e-6);
  }
}

TEST_CASE("height functional closed forms") {
  const Frame fr{1.0, 1.0};
  PotentialEval zero = [](double, double, double) { return 0.0; };
  PotentialEval one = [](double, double, double) { return 1.0; };

  // S(0.25) with P = 0: antiderivative of f0 * density gives 0.375
  CHECK(S_functional(zero, 0.25, 0.3, 1.3, fr) == doctest::Approx(0.375).epsilon(1e-10));
  CHECK(S_functional(zero, 0.0, 0.3, 1.3, fr) == 0.0);
  CHECK(S_derivative(zero, 0.25, 0.3, 1.3, fr) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(S_derivative(one, 0.25, 0.3, 1.3, fr) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(S_functional(zero, 0.4999, 0.3, 1.3, fr), std::domain_error);
}

TEST_CASE("S derivative matches centered differences of S") {
  const Frame fr{1.0, 1.0};
  Cloud sig = vtest::four_atoms();
  std::vector<double> psi{0.05, -0.1, 0.2, 0.0};
  PotentialEval P = [&](double s, double z, double m) { return potential_P(sig, psi, s, z, m); };
  vtest::Rng rng(19);
  for (int rep = 0; rep < 20; ++rep) {
    const double rho = rng.uni(0.05, 0.45), z = rng.uni(0, 1), m = 1.0 + z;
    const double h = 1e-6;
    const double fd = (S_functional(P, rho + h, z, m, fr) - S_functional(P, rho - h, z, m, fr)) / (2 * h);
    const double an = S_derivative(P, rho, z, m, fr);
    CHECK(std::abs(fd - an) <= 1e-6 * std::max(1.0, std::abs(an)));
  }
}

TEST_CASE("per-height minimization: constant potentials") {
  const Frame fr{1.0, 1.0};
  PotentialEval zero = [](double, double, double) { return 0.0; };
  PotentialEval one = [](double, double, double) { return 1.0; };
  PotentialEval ten = [](double, double, double) { return 10.0; };
  CHECK(minimize_S_z(zero, 0.5, 1.5, fr) == 0.0);
  CHECK(minimize_S_z(one, 0.5, 1.5, fr) == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(minimize_S_z(ten, 0.5, 1.5, fr) == doctest::Approx(0.475).epsilon(1e-9));
  // at the interior minimizer the boundary condition f0 = P holds tightly
  const double rho = minimize_S_z(one, 0.5, 1.5, fr);
  CHECK(std::abs(fr.f0(rho) - 1.0) <= 1e-6);
}

TEST_CASE("isotonic projection") {
  CHECK(pav_nondecreasing({0.3, 0.1}) == std::vector<double>{0.2, 0.2});
  const std::vector<double> mono{0.1, 0.2, 0.2, 0.5};
  CHECK(pav_nondecreasing(mono) == mono);
  const std::vector<double> constant{0.4, 0.4, 0.4};
  CHECK(pav_nondecreasing(constant) == constant);
  // idempotent and nondecreasing on random input
  vtest::Rng rng(23);
  std::vector<double> y(40);
  for (double& v : y) v = rng.uni(0, 1);
  const auto p1 = pav_nondecreasing(y);
  CHECK(pav_nondecreasing(p1) == p1);
  for (size_t i = 1; i < p1.size(); ++i) CHECK(p1[i] >= p1[i - 1]);
}

TEST_CASE("J is invariant under a common shift of psi at a converged state") {
  ModelConfig cfg = vtest::small_config(128);
  Cloud sig = vtest::four_atoms();
  auto [st, rep] = solve_dual(sig, cfg);
  const double J0 = J_objective(sig, st.psi, cfg).J;
  const double kappa = 1e-3;
  std::vector<double> shifted = st.psi;
  for (double& v : shifted) v += kappa;
  const double J1 = J_objective(sig, shifted, cfg).J;
  // the shift changes J by kappa (mass(rho*) - 1) plus a second-order term
  // from the tilted minimizer
  CHECK(std::abs(J1 - J0) <= kappa * std::abs(st.mass - 1.0) + 20.0 * kappa * kappa + 1e-9);
}

TEST_CASE("J is concave along random directions") {
  ModelConfig cfg = vtest::small_config(96);
  Cloud sig = vtest::four_atoms();
  auto [st, rep] = solve_dual(sig, cfg);
  vtest::Rng rng(31);
  for (int rep2 = 0; rep2 < 4; ++rep2) {
    std::vector<double> d(4);
    for (double& v : d) v = rng.uni(-0.2, 0.2);
    std::vector<double> lo = st.psi, hi = st.psi, mid = st.psi;
    for (int i = 0; i < 4; ++i) {
      lo[i] -= d[i];
      hi[i] += d[i];
    }
    const double Jlo = J_objective(sig, lo, cfg).J;
    const double Jhi = J_objective(sig, hi, cfg).J;
    const double Jmid = J_objective(sig, mid, cfg).J;
    CHECK(Jmid >= 0.5 * (Jlo + Jhi) - 1e-9);
  }
}

TEST_CASE("supergradient coordinates match finite differences of J") {
  ModelConfig cfg = vtest::small_config(128);
  Cloud sig = vtest::four_atoms();
  auto [st, rep] = solve_dual(sig, cfg);
  const double eps = 1e-5;
  for (int i = 0; i < sig.size(); ++i) {
    std::vector<double> pp = st.psi, pm = st.psi;
    pp[i] += eps;
    pm[i] -= eps;
    const double fd = (J_objective(sig, pp, cfg).J - J_objective(sig, pm, cfg).J) / (2 * eps);
    CHECK(std::abs(fd - (st.cell_mass[i] - sig.w[i])) <= 1e-3);
  }
}

TEST_CASE("solve_dual: four equal atoms balance to quarter masses") {
  ModelConfig cfg = vtest::small_config(256);
  Cloud sig = vtest::four_atoms();
  auto [st, rep] = solve_dual(sig, cfg);
  CHECK(rep.converged);
  CHECK(rep.gap >= -1e-9);
  CHECK(rep.gap <= cfg.solver.tol_gap * (1.0 + std::abs(rep.K)));
  for (int i = 0; i < 4; ++i) CHECK(st.cell_mass[i] == doctest::Approx(0.25).epsilon(4e-4));
  CHECK(st.boundary.nondecreasing());
  // boundary stays below the scan cap
  for (double r : st.boundary.rho) CHECK(r <= cfg.frame().scan_cap());
  // mass balance identity is exact by summation order
  double cm = 0.0;
  for (double v : st.cell_mass) cm += v;
  CHECK(cm == st.mass);
}

TEST_CASE("solve_dual: single atom forces unit mass") {
  ModelConfig cfg = vtest::small_config(128);
  Cloud sig;
  sig.push(0.9, 1.1, 1.0);
  auto [st, rep] = solve_dual(sig, cfg);
  CHECK(rep.converged);
  CHECK(st.cell_mass[0] == doctest::Approx(1.0).epsilon(1e-4));
  for (int k = 0; k < st.quad.size(); ++k) CHECK(st.assign[k] == 0);
}

TEST_CASE("solve_dual: permuting atoms leaves J, rho and gap unchanged") {
  ModelConfig cfg = vtest::small_config(128);
  Cloud sig = vtest::four_atoms();
  auto [st1, rep1] = solve_dual(sig, cfg);
  Cloud perm;
  const int order[4] = {2, 0, 3, 1};
  for (int i : order) perm.push(sig.x[i], sig.y[i], sig.w[i]);
  auto [st2, rep2] = solve_dual(perm, cfg);
  CHECK(rep1.J == doctest::Approx(rep2.J).epsilon(1e-9));
  // the gap itself is a near-zero diagnostic whose last digits depend on the
  // transport-evaluation order; both runs must sit in the acceptance band
  CHECK(std::abs(rep1.gap - rep2.gap) <= 5e-6);
  CHECK(rep2.gap >= -1e-9);
  CHECK(rep2.gap <= cfg.solver.tol_gap * (1.0 + std::abs(rep2.K)));
  for (int j = 0; j < st1.boundary.size(); ++j)
    CHECK(st1.boundary.rho[j] == doctest::Approx(st2.boundary.rho[j]).epsilon(1e-9));
}

TEST_CASE("solve_dual: manufactured self-consistent instance round-trips") {
  // fix atoms and psi, shift psi until the minimizing boundary carries unit
  // mass, then define the weights as the resulting cell masses; re-solving
  // from zero must recover the same boundary
  ModelConfig cfg = vtest::small_config(128);
  Cloud sig = vtest::four_atoms();
  // perturb a converged potential so all cells stay populated while the
  // manufactured weights come out unequal
  auto [st_base, rep_base] = solve_dual(sig, cfg);
  std::vector<double> psi_ref = st_base.psi;
  const double bump[4] = {0.02, -0.015, 0.01, -0.018};
  for (int i = 0; i < 4; ++i) psi_ref[i] += bump[i];
  double shift_lo = -2.0, shift_hi = 2.0;
  auto mass_at = [&](double shift) {
    std::vector<double> p = psi_ref;
    for (double& v : p) v -= shift;
    return evaluate_dual(sig, p, cfg).mass;
  };
  REQUIRE(mass_at(shift_lo) < 1.0);
  REQUIRE(mass_at(shift_hi) > 1.0);
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (shift_lo + shift_hi);
    (mass_at(mid) < 1.0 ? shift_lo : shift_hi) = mid;
  }
  std::vector<double> psi0 = psi_ref;
  for (double& v : psi0) v -= 0.5 * (shift_lo + shift_hi);
  DualEvaluation ev = evaluate_dual(sig, psi0, cfg);
  REQUIRE(std::abs(ev.mass - 1.0) < 1e-6);
  Cloud manufactured = sig;
  manufactured.w = ev.cell_mass;
  manufactured.renormalize_exact();

  auto [st, rep] = solve_dual(manufactured, cfg);
  CHECK(rep.converged);
  CHECK(rep.gap <= 1e-3 * (1.0 + std::abs(rep.K)));
  double sup = 0.0;
  for (int j = 0; j < st.boundary.size(); ++j)
    sup = std::max(sup, std::abs(st.boundary.rho[j] - ev.boundary.rho[j]));
  CHECK(sup <= 1e-2);
}

TEST_CASE("weak duality holds for sampled feasible pairs") {
  ModelConfig cfg = vtest::small_config(96);
  Cloud sig = vtest::four_atoms();
  auto [st, rep] = solve_dual(sig, cfg);
  const double m2 = second_moment(sig);
  vtest::Rng rng(47);
  for (int trial = 0; trial < 4; ++trial) {
    // random psi near the optimum
    std::vector<double> psi = st.psi;
    for (double& v : psi) v += rng.uni(-0.3, 0.3);
    const double J = J_objective(sig, psi, cfg).J;
    // random monotone boundary rescaled to unit mass by bisection
    FreeBoundary fb;
    fb.z_grid = uniform_z_grid(cfg.H, cfg.solver.n_z);
    fb.rho.resize(cfg.solver.n_z);
    const double base = rng.uni(0.1, 0.3), slope = rng.uni(0.0, 0.2);
    for (int j = 0; j < fb.size(); ++j) fb.rho[j] = base + slope * fb.z_grid[j];
    double lo = 0.05, hi = 20.0;  // the cap clamp makes the upper end heavy

    auto mass_of = [&](double scale) {
      FreeBoundary s = fb;
      for (double& r : s.rho) r = std::min(r * scale, cfg.frame().scan_cap());
      return closed_form_mass(s, cfg.frame());
    };
    REQUIRE(mass_of(lo) < 1.0);
    REQUIRE(mass_of(hi) > 1.0);
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      (mass_of(mid) < 1.0 ? lo : hi) = mid;
    }
    FreeBoundary unit = fb;
    for (double& r : unit.rho) r = std::min(r * 0.5 * (lo + hi), cfg.frame().scan_cap());
    const double K = K_objective(sig, unit, cfg);
    CHECK(K >= J + m2 - 1e-9);
  }
}

TEST_CASE("symmetric two-atom instance splits the mass evenly") {
  // constant profile, equal Upsilon coordinates: the interface is horizontal
  // and the psi offset places it exactly at mid-height
  ModelConfig cfg = vtest::small_config(128);
  cfg.ambient = AmbientProfile::linear(1.0, 0.0);  // theta0 == 1, phi(z) = z
  Cloud sig;
  sig.push(0.8, 0.6, 0.5);
  sig.push(0.8, 1.4, 0.5);
  std::vector<double> psi{0.0, 0.5 * (1.4 - 0.6)};  // interface at z = 1/2
  const DualEvaluation ev = evaluate_dual(sig, psi, cfg);
  CHECK(ev.cell_mass[0] == doctest::Approx(ev.cell_mass[1]).epsilon(1e-6));
}

TEST_CASE("J of a single atom matches the generic minimization path") {
  // independent route: the public per-height scan over the raw cost potential
  // composed with the adaptive S, midpoint rule in z
  ModelConfig cfg = vtest::small_config(48);
  const Frame fr = cfg.frame();
  Cloud sig;
  sig.push(0.9, 1.2, 1.0);
  std::vector<double> psi{0.3};
  PotentialEval P = [&](double s, double z, double m) {
    return cost(s, z, m, 0.9, 1.2) - 0.3;
  };
  double Href = 0.0;
  const double dz = cfg.H / cfg.solver.n_z;
  for (int j = 0; j < cfg.solver.n_z; ++j) {
    const double z = (j + 0.5) * dz;
    const double m = cfg.ambient.theta0(z);
    const double rho = minimize_S_z(P, z, m, fr, cfg.solver.scan_points);
    Href += S_functional(P, rho, z, m, fr) * dz;
  }
  const double Jref = -0.3 + Href;
  CHECK(J_objective(sig, psi, cfg).J == doctest::Approx(Jref).epsilon(1e-8));
}

TEST_CASE("K with a matched discretization has no transport term") {
  // sigma equals the pushforward of the quadrature itself, so the W2 part
  // vanishes and K reduces to the density integrals
  ModelConfig cfg = vtest::small_config(16);
  const Frame fr = cfg.frame();
  const FreeBoundary fb = vtest::constant_boundary(1.0 / 3.0, cfg.H, cfg.solver.n_z);
  const ReferenceMeasure rm = build_reference_measure(fb, fr, cfg.solver.n_s);
  Cloud sigma = f_pushforward(rm, cfg.ambient);
  sigma.renormalize_exact();
  const double K = K_objective(sigma, fb, cfg);
  double int_sphi2 = 0.0, int_f0 = 0.0;
  for (int k = 0; k < rm.size(); ++k) {
    const double phi = cfg.ambient.phi(rm.z_grid[rm.col[k]]);
    const double wn = rm.w[k] / rm.mass;
    int_sphi2 += wn * (rm.s[k] * rm.s[k] + phi * phi);
    int_f0 += wn * fr.f0(rm.s[k]);
  }
  CHECK(K == doctest::Approx(-0.5 * int_sphi2 + int_f0).epsilon(1e-9));
}

TEST_CASE("K objective sentinel off the unit-mass set") {
  ModelConfig cfg = vtest::small_config(64);
  Cloud sig = vtest::four_atoms();
  const FreeBoundary small = vtest::constant_boundary(0.05, cfg.H, cfg.solver.n_z);
  CHECK(std::isinf(K_objective(sig, small, cfg)));
}

TEST_CASE("duality gap: increases under perturbation, infinite off feasibility") {
  ModelConfig cfg = vtest::small_config(128);
  Cloud sig = vtest::four_atoms();
  auto [st, rep] = solve_dual(sig, cfg);
  const GapBreakdown g0 = duality_gap(sig, st, cfg);
  CHECK(g0.feasible);
  CHECK(g0.gap >= -1e-9);
  CHECK(g0.gap <= 1e-3 * (1.0 + std::abs(g0.K)));
  DualState perturbed = st;
  vtest::Rng rng(61);
  for (double& v : perturbed.psi) v += rng.uni(0.02, 0.1);
  const GapBreakdown g1 = duality_gap(sig, perturbed, cfg);
  CHECK(g1.gap > g0.gap);
}

TEST_CASE("boundary residual on synthetic states") {
  ModelConfig cfg = vtest::small_config(32);
  // atoms at the origin corner with psi = -1 make P == 1 up to 1e-12
  DualState st;
  st.sigma.push(1e-14, 1e-14, 1.0);
  st.psi = {-1.0};
  st.boundary = vtest::constant_boundary(0.25, cfg.H, 32);
  CHECK(boundary_residual(st, cfg) <= 1e-9);
  // rho == 0 everywhere: the condition is vacuous
  st.boundary = vtest::constant_boundary(0.0, cfg.H, 32);
  CHECK(boundary_residual(st, cfg) == 0.0);
}

TEST_CASE("barycenters: single atom covers the whole domain") {
  ModelConfig cfg = vtest::small_config(96);
  Cloud sig;
  sig.push(0.9, 1.1, 1.0);
  auto [st, rep] = solve_dual(sig, cfg);
  const Barycenters b = barycenter_selection(st, cfg);
  // against direct integrals of the reference measure
  double ws = 0.0, wphi = 0.0, wm = 0.0;
  for (int k = 0; k < st.quad.size(); ++k) {
    ws += st.quad.w[k] * st.quad.s[k];
    wphi += st.quad.w[k] * cfg.ambient.phi(st.quad.z_grid[st.quad.col[k]]);
    wm += st.quad.w[k];
  }
  CHECK(b.s[0] == doctest::Approx(ws / wm).epsilon(1e-12));
  CHECK(b.phi[0] == doctest::Approx(wphi / wm).epsilon(1e-12));
  CHECK(cfg.ambient.phi(b.zbar[0]) == doctest::Approx(b.phi[0]).epsilon(1e-9));
}

TEST_CASE("barycenters live in their own cells") {
  ModelConfig cfg = vtest::small_config(128);
  Cloud sig = vtest::four_atoms();
  auto [st, rep] = solve_dual(sig, cfg);
  const Barycenters b = barycenter_selection(st, cfg);
  for (int i = 0; i < sig.size(); ++i)
    CHECK(cell_assign(st, cfg.ambient, b.s[i], b.zbar[i]) == i);
}

TEST_CASE("barycenter refinement consistency") {
  Cloud sig = vtest::four_atoms();
  ModelConfig coarse = vtest::small_config(96);
  ModelConfig fine = vtest::small_config(192);
  auto [st1, rep1] = solve_dual(sig, coarse);
  auto [st2, rep2] = solve_dual(sig, fine, &st1.psi);
  const Barycenters b1 = barycenter_selection(st1, coarse);
  const Barycenters b2 = barycenter_selection(st2, fine);
  const double budget = 8.0 * (0.5 / 96 + 1.0 / 96);
  for (int i = 0; i < sig.size(); ++i) {
    CHECK(std::abs(b1.s[i] - b2.s[i]) <= budget);
    CHECK(std::abs(b1.zbar[i] - b2.zbar[i]) <= budget);
  }
}

TEST_CASE("transport map is the assigned atom and is piecewise constant") {
  ModelConfig cfg = vtest::small_config(96);
  Cloud sig = vtest::four_atoms();
  auto [st, rep] = solve_dual(sig, cfg);
  const auto q1 = T_map(st, cfg.ambient, 0.11, 0.52);
  const auto q2 = T_map(st, cfg.ambient, 0.1101, 0.5201);
  CHECK(q1 == q2);
  const int i = cell_assign(st, cfg.ambient, 0.11, 0.52);
  CHECK(q1.first == sig.x[i]);
  CHECK(q1.second == sig.y[i]);
}

TEST_CASE("P-derivative bounds: argmax coordinates stay within the support ball") {
  ModelConfig cfg = vtest::small_config(96);
  Cloud sig = vtest::four_atoms();
  auto [st, rep] = solve_dual(sig, cfg);
  vtest::Rng rng(83);
  for (int probe = 0; probe < 50; ++probe) {
    const double s = rng.uni(0, 0.45), z = rng.uni(0, 1);
    const int i = cell_assign(st, cfg.ambient, s, z);
    CHECK(sig.x[i] >= 0.0);
    CHECK(sig.x[i] <= cfg.l);
    CHECK(sig.y[i] >= 0.0);
    CHECK(sig.y[i] <= cfg.l);
  }
  // finite-difference slope of P in s is bounded by the largest atom coordinate
  double max_ups = 0.0;
  for (int i = 0; i < sig.size(); ++i) max_ups = std::max(max_ups, sig.x[i]);
  const double h = 1e-7;
  for (int probe = 0; probe < 20; ++probe) {
    const double s = rng.uni(0.01, 0.44), z = rng.uni(0, 1);
    const double m = cfg.ambient.theta0(z);
    const double slope =
        (potential_P(sig, st.psi, s + h, z, m) - potential_P(sig, st.psi, s - h, z, m)) / (2 * h);
    CHECK(slope >= -1e-9);
    CHECK(slope <= max_ups + 1e-9);
  }
}

TEST_CASE("empirical boundary Lipschitz bound") {
  ModelConfig cfg = vtest::small_config(256);
  Cloud sig = generate_atoms(42, AtomGenOptions{});  // Z >= 0.5
  auto [st, rep] = solve_dual(sig, cfg);
  const Frame fr = cfg.frame();
  const double mstar = st.boundary.max_value();
  const double c1 = fr.f0_prime(mstar);
  double b1 = 1e300;
  for (int j = 0; j <= 64; ++j) {
    const double z = cfg.H * j / 64.0;
    b1 = std::min({b1, cfg.ambient.theta0(z), cfg.ambient.phi_prime(z)});
  }
  const double c2 = 0.5 * b1 * b1;
  const double bound = c1 / c2 * 1.1;
  const double dzg = cfg.H / cfg.solver.n_z;
  for (int j = 1; j < st.boundary.size(); ++j) {
    if (st.boundary.rho[j - 1] <= 0.0 || st.boundary.rho[j] <= 0.0) continue;
    const double drho = st.boundary.rho[j] - st.boundary.rho[j - 1];
    if (drho <= 0.0) continue;
    CHECK(dzg / drho <= bound);
  }
}

TEST_CASE("stability under jittered atoms") {
  ModelConfig cfg = vtest::small_config(128);
  Cloud sig = vtest::four_atoms();
  auto [st0, rep0] = solve_dual(sig, cfg);
  vtest::Rng rng(91);
  std::vector<std::pair<double, double>> dirs;
  for (int i = 0; i < sig.size(); ++i) {
    const double ang = rng.uni(0, 2 * M_PI);
    dirs.push_back({std::cos(ang), std::sin(ang)});
  }
  auto jitter = [&](double delta) {
    Cloud c = sig;
    for (int i = 0; i < c.size(); ++i) {
      c.x[i] += delta * dirs[i].first;
      c.y[i] += delta * dirs[i].second;
    }
    return c;
  };
  auto boundary_l1 = [&](const FreeBoundary& a, const FreeBoundary& b) {
    double acc = 0.0;
    for (int j = 0; j < a.size(); ++j) acc += std::abs(a.rho[j] - b.rho[j]);
    return acc * cfg.H / a.size();
  };
  auto [st1, rep1] = solve_dual(jitter(1e-2), cfg);
  auto [st2, rep2] = solve_dual(jitter(1e-3), cfg);
  const double d1 = boundary_l1(st1.boundary, st0.boundary);
  const double d2 = boundary_l1(st2.boundary, st0.boundary);
  CHECK(d2 < d1);
  // assignment agreement on a probe grid increases as the jitter shrinks
  auto agreement = [&](const DualState& s) {
    int agree = 0, total = 0;
    for (int a = 1; a < 40; ++a)
      for (int b = 1; b < 40; ++b) {
        const double s_probe = 0.4 * a / 40.0;
        const double z_probe = cfg.H * b / 40.0;
        ++total;
        if (cell_assign(s, cfg.ambient, s_probe, z_probe) ==
            cell_assign(st0, cfg.ambient, s_probe, z_probe))
          ++agree;
      }
    return static_cast<double>(agree) / total;
  };
  CHECK(agreement(st2) >= agreement(st1));
}
