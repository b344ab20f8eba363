#pragma once
// Model configuration: physical constants, ambient temperature profile,
// forcing terms, solver and time-grid settings, and the sampled checks of the
// admissibility assumptions on the profile and the forcing.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vortex/core.hpp"

namespace vortex {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Ambient temperature profile theta0(z) with its derivative. phi(z) = z/theta0(z)
// is strictly increasing whenever theta0 - z theta0' > 0, which makes the
// bisection inverse well defined.
struct AmbientProfile {
  std::function<double(double)> theta0;
  std::function<double(double)> dtheta0;
  double lipschitz_bound = 0.0;

  static AmbientProfile linear(double A, double B) {
    AmbientProfile p;
    p.theta0 = [A, B](double z) { return A + B * z; };
    p.dtheta0 = [B](double) { return B; };
    p.lipschitz_bound = std::abs(B);
    return p;
  }

  // theta0(z) = (A + B z^alpha)^beta, the admissible power family
  // (A, B > 0, beta >= 1, alpha*beta <= 1).
  static AmbientProfile power(double A, double B, double alpha, double beta) {
    AmbientProfile p;
    p.theta0 = [=](double z) { return std::pow(A + B * std::pow(z, alpha), beta); };
    p.dtheta0 = [=](double z) {
      if (z <= 0.0) z = 1e-12;
      return beta * std::pow(A + B * std::pow(z, alpha), beta - 1.0) * B * alpha *
             std::pow(z, alpha - 1.0);
    };
    p.lipschitz_bound = 0.0;  // estimated during validation
    return p;
  }

  double phi(double z) const { return z / theta0(z); }

  double phi_prime(double z) const {
    const double t = theta0(z);
    return (t - z * dtheta0(z)) / (t * t);
  }

  // Inverse of phi on [0, H] by bisection; phi is strictly increasing under A1.
  double phi_inverse(double y, double H) const {
    const double lo_v = phi(0.0), hi_v = phi(H);
    const double slack = 1e-9 * (1.0 + std::abs(hi_v));
    if (y < lo_v - slack || y > hi_v + slack)
      throw std::domain_error("phi_inverse: value outside [phi(0), phi(H)]");
    double lo = 0.0, hi = H;
    for (int it = 0; it < 200 && hi - lo > 1e-12 * (1.0 + H); ++it) {
      const double mid = 0.5 * (lo + hi);
      if (phi(mid) < y)
        lo = mid;
      else
        hi = mid;
    }
    return 0.5 * (lo + hi);
  }
};

// Momentum and heat sources F0(t,r,z), F1(t,r,z). The default family is
// time independent and satisfies B1-B3 by construction; t is threaded through
// so time-dependent forcings can be configured.
struct Forcing {
  std::function<double(double, double, double)> F0;
  std::function<double(double, double, double)> F1;
  double bound_M = 0.0;

  static Forcing exponential(double M, double g, double r0) {
    Forcing f;
    f.bound_M = M;
    f.F0 = [M, r0](double, double r, double) { return M * (1.0 - std::exp(-(r - r0))); };
    f.F1 = [M, g](double, double, double z) { return M / g * (1.0 - std::exp(-z)); };
    return f;
  }

  static Forcing zero() {
    Forcing f;
    f.bound_M = 0.0;
    f.F0 = [](double, double, double) { return 0.0; };
    f.F1 = [](double, double, double) { return 0.0; };
    return f;
  }
};

struct SolverOptions {
  int n_s = 512;
  int n_z = 512;
  int scan_points = 512;
  int max_iter = 5000;
  double tol_mass = 5e-5;
  double tol_rho = 1e-6;
  double tol_gap = 5e-4;  // relative, scaled by 1 + |K|
  int ot_cap = 4096;
};

struct OutputOptions {
  bool fields = false;
  int fields_res = 256;
  bool meridional = false;
};

struct ModelConfig {
  double r0 = 1.0;
  double omega = 1.0;
  double g = 1.0;
  double H = 1.0;
  double M = 0.25;          // forcing bound of B1
  double I0_lo = 0.9;
  double I0_hi = 2.1;
  double l0 = 0.5;          // initial support radius
  double l = 2.0;           // working support radius
  double T = 0.5;
  int N = 16;

  AmbientProfile ambient = AmbientProfile::linear(1.0, 1.0);
  Forcing forcing = Forcing::exponential(0.25, 1.0, 1.0);
  SolverOptions solver;
  OutputOptions output;
  std::string ambient_desc = "linear A=1 B=1";
  std::string forcing_desc = "exponential";

  Frame frame() const { return Frame{r0, omega}; }

  double tau() const { return T / static_cast<double>(N); }

  // Theorem precondition for the time-stepping scheme.
  bool theorem_precondition_ok() const {
    return std::exp(4.0 * M * T) * (4.0 * l0 + 1.0) < l + 1.0;
  }

  // Fixed test configuration used across the repo.
  static ModelConfig canonical() { return ModelConfig{}; }

  void check_basics() const {
    auto pos = [](double v, const char* name) {
      if (!(v > 0.0)) throw ConfigError(std::string("config: ") + name + " must be positive");
    };
    pos(r0, "r0");
    pos(omega, "omega");
    pos(g, "g");
    pos(H, "H");
    pos(I0_lo, "I0_lo");
    pos(l0, "l0");
    pos(l, "l");
    pos(T, "T");
    if (!(M >= 0.0)) throw ConfigError("config: M must be nonnegative");
    if (!(I0_lo < I0_hi)) throw ConfigError("config: I0 interval empty");
    if (N < 1) throw ConfigError("config: N must be >= 1");
    if (solver.n_s < 2 || solver.n_z < 2) throw ConfigError("config: quadrature resolution < 2");
  }
};

struct CheckResult {
  std::string name;
  bool pass = false;
  double margin = 0.0;  // worst sampled slack; negative means violated
  std::string detail;
};

struct ValidationReport {
  std::vector<CheckResult> checks;
  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
  const CheckResult* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

// Sampled validation of A1/A1'/A2 for the profile and B1/B2/B3 for the
// forcing. Reports margins, never throws on a failed check.
inline ValidationReport validate_assumptions(const ModelConfig& cfg) {
  ValidationReport rep;
  const int n = 512;
  const double dz = cfg.H / n;

  // theta0 maps into I0
  {
    double margin = 1e300;
    for (int j = 0; j <= n; ++j) {
      const double z = j * dz;
      const double t = cfg.ambient.theta0(z);
      margin = std::min(margin, std::min(t - cfg.I0_lo, cfg.I0_hi - t));
    }
    rep.checks.push_back({"theta0-in-I0", margin > 0.0, margin,
                          "min distance of theta0(z) to the ends of I0"});
  }
  // A1 / A1': theta0 - z theta0' bounded away from zero
  {
    double inf_val = 1e300;
    for (int j = 0; j <= n; ++j) {
      const double z = j * dz;
      inf_val = std::min(inf_val, cfg.ambient.theta0(z) - z * cfg.ambient.dtheta0(z));
    }
    rep.checks.push_back({"A1", inf_val > 0.0, inf_val, "pointwise theta0 - z theta0' > 0"});
    rep.checks.push_back({"A1'", inf_val > 1e-12, inf_val, "inf over grid of theta0 - z theta0'"});
  }
  // A2: Lipschitz estimate by max finite-difference slope
  {
    double lip = 0.0;
    bool finite = true;
    for (int j = 0; j < n; ++j) {
      const double z = j * dz;
      const double slope = std::abs(cfg.ambient.theta0(z + dz) - cfg.ambient.theta0(z)) / dz;
      if (!std::isfinite(slope)) finite = false;
      lip = std::max(lip, slope);
    }
    rep.checks.push_back({"A2", finite, lip, "estimated Lipschitz constant of theta0"});
  }

  // Forcing samples: t in {0, T/2, T}, r over the radii reachable from the
  // scan interval, z over [0, H].
  const Frame fr = cfg.frame();
  const double r_hi = fr.r_of_s(0.99 * fr.scan_cap());
  const int nr = 64, nz = 64;
  const double ts[3] = {0.0, 0.5 * cfg.T, cfg.T};
  {
    double margin = 1e300;
    for (double t : ts)
      for (int i = 0; i <= nr; ++i)
        for (int j = 0; j <= nz; ++j) {
          const double r = cfg.r0 + (r_hi - cfg.r0) * i / nr;
          const double z = cfg.H * j / nz;
          const double f0v = cfg.forcing.F0(t, r, z);
          const double f1v = cfg.g * cfg.forcing.F1(t, r, z);
          margin = std::min({margin, f0v, cfg.M - f0v, f1v, cfg.M - f1v});
        }
    rep.checks.push_back({"B1", margin >= -1e-12, margin, "0 <= F0, g F1 <= M at samples"});
  }
  {
    double dev = 0.0;
    for (double t : ts)
      for (int i = 0; i <= nr; ++i) {
        const double r = cfg.r0 + (r_hi - cfg.r0) * i / nr;
        const double base0 = cfg.forcing.F0(t, r, 0.0);
        for (int j = 1; j <= nz; ++j)
          dev = std::max(dev, std::abs(cfg.forcing.F0(t, r, cfg.H * j / nz) - base0));
      }
    for (double t : ts)
      for (int j = 0; j <= nz; ++j) {
        const double z = cfg.H * j / nz;
        const double base1 = cfg.forcing.F1(t, cfg.r0, z);
        for (int i = 1; i <= nr; ++i)
          dev = std::max(dev, std::abs(cfg.forcing.F1(t, cfg.r0 + (r_hi - cfg.r0) * i / nr, z) - base1));
      }
    rep.checks.push_back({"B2", dev <= 1e-12, -dev, "F0 independent of z, F1 independent of r"});
  }
  {
    double inc = 1e300;
    for (double t : ts) {
      for (int i = 0; i < nr; ++i) {
        const double r = cfg.r0 + (r_hi - cfg.r0) * i / nr;
        const double rn = cfg.r0 + (r_hi - cfg.r0) * (i + 1) / nr;
        inc = std::min(inc, cfg.forcing.F0(t, rn, 0.0) - cfg.forcing.F0(t, r, 0.0));
      }
      for (int j = 0; j < nz; ++j) {
        const double z = cfg.H * j / nz;
        const double zn = cfg.H * (j + 1) / nz;
        inc = std::min(inc, cfg.forcing.F1(t, cfg.r0, zn) - cfg.forcing.F1(t, cfg.r0, z));
      }
    }
    rep.checks.push_back({"B3", inc > 0.0, inc, "F0 increasing in r, F1 increasing in z (sampled)"});
  }
  return rep;
}

inline std::pair<double, double> forcing_eval(const ModelConfig& cfg, double t, double r, double z) {
  return {cfg.forcing.F0(t, r, z), cfg.forcing.F1(t, r, z)};
}

// ---------------------------------------------------------------------------
// INI-style configuration files: [section] lines and key = value pairs,
// '#' or ';' comments. Unknown keys are rejected to catch typos.

namespace detail {
inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}
}  // namespace detail

inline std::map<std::string, std::string> parse_ini(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config: malformed section at line " + std::to_string(lineno));
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config: expected key=value at line " + std::to_string(lineno));
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config: empty key at line " + std::to_string(lineno));
    kv[section.empty() ? key : section + "." + key] = val;
  }
  return kv;
}

inline ModelConfig config_from_kv(std::map<std::string, std::string> kv) {
  ModelConfig cfg;
  auto take = [&kv](const std::string& key) -> std::string {
    auto it = kv.find(key);
    if (it == kv.end()) return "";
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto num = [&take](const std::string& key, double& dst) {
    const std::string v = take(key);
    if (v.empty()) return;
    try {
      size_t pos = 0;
      dst = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
    } catch (const std::exception&) {
      throw ConfigError("config: bad numeric value for " + key + ": '" + v + "'");
    }
  };
  auto integer = [&num](const std::string& key, int& dst) {
    double d = dst;
    num(key, d);
    dst = static_cast<int>(d);
  };
  auto boolean = [&take](const std::string& key, bool& dst) {
    const std::string v = take(key);
    if (v.empty()) return;
    if (v == "true" || v == "1")
      dst = true;
    else if (v == "false" || v == "0")
      dst = false;
    else
      throw ConfigError("config: bad boolean for " + key + ": '" + v + "'");
  };

  num("model.r0", cfg.r0);
  num("model.omega", cfg.omega);
  num("model.g", cfg.g);
  num("model.H", cfg.H);
  num("model.M", cfg.M);
  num("model.I0_lo", cfg.I0_lo);
  num("model.I0_hi", cfg.I0_hi);
  num("model.l0", cfg.l0);
  num("model.l", cfg.l);

  std::string family = take("ambient.family");
  double A = 1.0, B = 1.0, alpha = 1.0, beta = 1.0;
  num("ambient.A", A);
  num("ambient.B", B);
  num("ambient.alpha", alpha);
  num("ambient.beta", beta);
  if (family.empty() || family == "linear") {
    cfg.ambient = AmbientProfile::linear(A, B);
    cfg.ambient_desc = "linear A=" + std::to_string(A) + " B=" + std::to_string(B);
  } else if (family == "power") {
    cfg.ambient = AmbientProfile::power(A, B, alpha, beta);
    cfg.ambient_desc = "power A=" + std::to_string(A) + " B=" + std::to_string(B) +
                       " alpha=" + std::to_string(alpha) + " beta=" + std::to_string(beta);
  } else {
    throw ConfigError("config: unknown ambient.family '" + family + "'");
  }

  std::string ffam = take("forcing.family");
  if (ffam.empty() || ffam == "default" || ffam == "exponential") {
    cfg.forcing = Forcing::exponential(cfg.M, cfg.g, cfg.r0);
    cfg.forcing_desc = "exponential";
  } else if (ffam == "zero") {
    cfg.forcing = Forcing::zero();
    cfg.forcing_desc = "zero";
  } else {
    throw ConfigError("config: unknown forcing.family '" + ffam + "'");
  }

  integer("solver.n_s", cfg.solver.n_s);
  integer("solver.n_z", cfg.solver.n_z);
  integer("solver.scan_points", cfg.solver.scan_points);
  integer("solver.max_iter", cfg.solver.max_iter);
  num("solver.tol_mass", cfg.solver.tol_mass);
  num("solver.tol_rho", cfg.solver.tol_rho);
  num("solver.tol_gap", cfg.solver.tol_gap);
  integer("solver.ot_cap", cfg.solver.ot_cap);

  num("time.T", cfg.T);
  integer("time.N", cfg.N);

  boolean("output.fields", cfg.output.fields);
  integer("output.fields_res", cfg.output.fields_res);
  boolean("output.meridional", cfg.output.meridional);

  if (!kv.empty()) throw ConfigError("config: unknown key '" + kv.begin()->first + "'");
  cfg.check_basics();
  return cfg;
}

inline ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  return config_from_kv(parse_ini(in));
}

}  // namespace vortex
