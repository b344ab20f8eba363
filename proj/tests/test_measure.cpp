#include <doctest.h>

#include "support.hpp"

using namespace vortex;

TEST_CASE("reference measure mass: constant boundaries") {
  const Frame fr{1.0, 1.0};
  // closed form: column mass = rho / (1 - 2 rho) for r0 = Omega = 1
  const FreeBoundary third = vtest::constant_boundary(1.0 / 3.0, 1.0, 256);
  const ReferenceMeasure rm = build_reference_measure(third, fr, 256);
  CHECK(rm.mass == doctest::Approx(1.0).epsilon(5e-3));

  const FreeBoundary quarter = vtest::constant_boundary(0.25, 1.0, 256);
  CHECK(build_reference_measure(quarter, fr, 256).mass == doctest::Approx(0.5).epsilon(5e-3));

  const FreeBoundary zero = vtest::constant_boundary(0.0, 1.0, 64);
  const ReferenceMeasure rm0 = build_reference_measure(zero, fr, 64);
  CHECK(rm0.mass == 0.0);
  CHECK(rm0.size() == 0);

  CHECK_THROWS_AS(build_reference_measure(third, fr, 1), std::invalid_argument);
}

TEST_CASE("reference measure nodes lie inside the domain with positive weights") {
  const Frame fr{1.0, 1.0};
  FreeBoundary fb;
  fb.z_grid = uniform_z_grid(1.0, 37);
  fb.rho.resize(37);
  for (int j = 0; j < 37; ++j) fb.rho[j] = 0.05 + 0.3 * fb.z_grid[j];
  const ReferenceMeasure rm = build_reference_measure(fb, fr, 41);
  REQUIRE(rm.size() > 0);
  for (int k = 0; k < rm.size(); ++k) {
    CHECK(rm.w[k] > 0.0);
    CHECK(rm.s[k] >= 0.0);
    CHECK(rm.s[k] <= fb.rho[rm.col[k]]);
  }
}

TEST_CASE("quadrature mass converges to the exact integral") {
  // the s-direction is integrated exactly, so the error is the z-midpoint
  // rule error, second order: quartering under joint refinement
  const Frame fr{1.0, 1.0};
  auto rho_of_z = [](double z) { return 0.1 + 0.25 * z * z; };
  // exact mass by dense Richardson-extrapolated midpoint in z
  auto mass_at = [&](int n_z, int n_s) {
    FreeBoundary fb;
    fb.z_grid = uniform_z_grid(1.0, n_z);
    fb.rho.resize(n_z);
    for (int j = 0; j < n_z; ++j) fb.rho[j] = rho_of_z(fb.z_grid[j]);
    return build_reference_measure(fb, fr, n_s).mass;
  };
  const double fine = mass_at(4096, 64);
  const double exact = fine + (fine - mass_at(2048, 64)) / 3.0;
  const double e1 = std::abs(mass_at(64, 64) - exact);
  const double e2 = std::abs(mass_at(128, 128) - exact);
  const double ratio = e1 / e2;
  CHECK(ratio >= 3.3);
  CHECK(ratio <= 4.7);
}

TEST_CASE("closed form mass oracle matches quadrature") {
  const Frame fr{0.9, 1.4};
  FreeBoundary fb;
  fb.z_grid = uniform_z_grid(0.8, 97);
  fb.rho.resize(97);
  for (int j = 0; j < 97; ++j) fb.rho[j] = 0.2 + 0.2 * fb.z_grid[j];
  const ReferenceMeasure rm = build_reference_measure(fb, fr, 111);
  CHECK(rm.mass == doctest::Approx(closed_form_mass(fb, fr)).epsilon(1e-12));
}

TEST_CASE("pushforward through f preserves mass and maps heights to ratios") {
  const Frame fr{1.0, 1.0};
  const AmbientProfile amb = AmbientProfile::linear(1.0, 1.0);
  FreeBoundary fb = vtest::constant_boundary(0.3, 1.0, 50);
  const ReferenceMeasure rm = build_reference_measure(fb, fr, 64);
  const Cloud fc = f_pushforward(rm, amb);
  CHECK(fc.total_weight() == rm.mass);  // same weight vector
  // phi(0) = 0 and phi(1) = 0.5 frame the image heights
  for (int k = 0; k < fc.size(); ++k) {
    CHECK(fc.y[k] >= 0.0);
    CHECK(fc.y[k] <= 0.5);
    CHECK(fc.y[k] == amb.phi(rm.z_grid[rm.col[k]]));
  }
}

TEST_CASE("second moment") {
  Cloud one;
  one.push(3.0, 4.0, 1.0);
  CHECK(second_moment(one) == doctest::Approx(12.5).epsilon(1e-15));
  Cloud tiny;
  tiny.push(1e-9, 1e-9, 1.0);
  CHECK(second_moment(tiny) == doctest::Approx(0.0).epsilon(1e-15));
  Cloud two;
  two.push(1.0, 0.0, 0.5);
  two.push(0.0, 1.0, 0.5);
  CHECK(second_moment(two) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("cloud bookkeeping: weights sum to one exactly, duplicates merge") {
  Cloud c;
  c.push(1.0, 1.0, 0.3);
  c.push(2.0, 1.0, 0.4);
  c.push(1.0, 1.0, 0.2);
  Cloud m = c.merged_duplicates();
  CHECK(m.size() == 2);
  CHECK(m.w[0] == doctest::Approx(0.5).epsilon(1e-15));
  m.renormalize_exact();
  double sum = 0.0;
  for (double w : m.w) sum += w;
  CHECK(sum == 1.0);  // exact by construction
}

TEST_CASE("support radius") {
  Cloud c;
  c.push(3.0, 4.0, 1.0);
  CHECK(support_radius(c) == doctest::Approx(5.0).epsilon(1e-15));
}
