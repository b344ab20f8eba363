#pragma once
// Free boundary rho(z) on a midpoint height grid, the isotonic projection that
// enforces its monotonicity, and the physical surface varsigma = r(rho).

#include <stdexcept>
#include <vector>

#include "vortex/core.hpp"

namespace vortex {

inline std::vector<double> uniform_z_grid(double H, int n_z) {
  if (n_z < 1) throw std::invalid_argument("uniform_z_grid: n_z < 1");
  std::vector<double> z(n_z);
  const double dz = H / n_z;
  for (int j = 0; j < n_z; ++j) z[j] = (j + 0.5) * dz;
  return z;
}

struct FreeBoundary {
  std::vector<double> z_grid;  // midpoints of n_z cells on [0, H]
  std::vector<double> rho;     // boundary value per height cell

  int size() const { return static_cast<int>(rho.size()); }

  double max_value() const {
    double m = 0.0;
    for (double v : rho) m = std::max(m, v);
    return m;
  }

  bool nondecreasing() const {
    for (size_t j = 1; j < rho.size(); ++j)
      if (rho[j] < rho[j - 1]) return false;
    return true;
  }

  // Sum of adjacent monotonicity violations, zero iff nondecreasing.
  double total_violation() const {
    double v = 0.0;
    for (size_t j = 1; j < rho.size(); ++j) v += std::max(0.0, rho[j - 1] - rho[j]);
    return v;
  }
};

// Least-squares projection onto nondecreasing sequences (pool adjacent
// violators, uniform weights). Idempotent.
inline std::vector<double> pav_nondecreasing(const std::vector<double>& y) {
  const size_t n = y.size();
  std::vector<double> value;
  std::vector<int> count;
  value.reserve(n);
  count.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    value.push_back(y[i]);
    count.push_back(1);
    while (value.size() > 1 && value[value.size() - 2] > value.back()) {
      const double merged =
          (value[value.size() - 2] * count[count.size() - 2] + value.back() * count.back()) /
          (count[count.size() - 2] + count.back());
      count[count.size() - 2] += count.back();
      value[value.size() - 2] = merged;
      value.pop_back();
      count.pop_back();
    }
  }
  std::vector<double> out;
  out.reserve(n);
  for (size_t b = 0; b < value.size(); ++b)
    for (int k = 0; k < count[b]; ++k) out.push_back(value[b]);
  return out;
}

inline FreeBoundary monotone_project(const FreeBoundary& raw) {
  FreeBoundary fb = raw;
  fb.rho = pav_nondecreasing(raw.rho);
  return fb;
}

// Physical free surface varsigma(z) = sqrt(2 f0(rho(z))) / Omega.
inline std::vector<double> varsigma(const FreeBoundary& fb, const Frame& fr) {
  std::vector<double> out(fb.rho.size());
  for (size_t j = 0; j < fb.rho.size(); ++j) out[j] = fr.r_of_s(fb.rho[j]);
  return out;
}

}  // namespace vortex
