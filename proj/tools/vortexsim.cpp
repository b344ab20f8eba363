// Batch entry point: validate configs, run single dual solves, run the time
// stepper, run the oracle cross-check suite, and aggregate diagnostics.
//
// Exit codes: 0 success, 2 invalid configuration, 3 solver non-convergence,
// 4 support-bound or theorem-precondition violation.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "atom_gen.hpp"
#include "vortex/vortex.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int log_level() {
  const char* env = std::getenv("VORTEX_LOG");
  if (!env) return 0;
  const std::string v(env);
  if (v == "debug" || v == "2") return 2;
  if (v == "info" || v == "1") return 1;
  return 0;
}

void log_info(const std::string& msg) {
  if (log_level() >= 1) std::fprintf(stderr, "[vortexsim] %s\n", msg.c_str());
}

struct PhaseTimer {
  using clock = std::chrono::steady_clock;
  clock::time_point start = clock::now();
  json timings = json::object();
  void mark(const std::string& phase) {
    const auto now = clock::now();
    timings[phase] = std::chrono::duration<double, std::milli>(now - start).count();
    start = now;
  }
};

json config_snapshot(const vortex::ModelConfig& cfg) {
  return json{{"r0", cfg.r0},
              {"omega", cfg.omega},
              {"g", cfg.g},
              {"H", cfg.H},
              {"M", cfg.M},
              {"I0_lo", cfg.I0_lo},
              {"I0_hi", cfg.I0_hi},
              {"l0", cfg.l0},
              {"l", cfg.l},
              {"T", cfg.T},
              {"N", cfg.N},
              {"ambient", cfg.ambient_desc},
              {"forcing", cfg.forcing_desc},
              {"solver",
               {{"n_s", cfg.solver.n_s},
                {"n_z", cfg.solver.n_z},
                {"scan_points", cfg.solver.scan_points},
                {"max_iter", cfg.solver.max_iter},
                {"tol_mass", cfg.solver.tol_mass},
                {"tol_rho", cfg.solver.tol_rho},
                {"tol_gap", cfg.solver.tol_gap},
                {"ot_cap", cfg.solver.ot_cap}}}};
}

struct RunContext {
  vortex::ModelConfig cfg;
  std::string config_path;
  std::string out_dir;
  std::string atoms_path;
  std::uint64_t seed = 42;
  PhaseTimer timer;
  std::vector<std::string> outputs;

  vortex::Cloud load_sigma(const vortex::AtomGenOptions& gen_defaults) {
    if (!atoms_path.empty()) {
      log_info("loading atoms from " + atoms_path);
      return vortex::read_particles_csv(atoms_path);
    }
    log_info("generating seeded atoms, seed=" + std::to_string(seed));
    return vortex::generate_atoms(seed, gen_defaults);
  }

  void ensure_out() {
    if (out_dir.empty()) out_dir = ".";
    fs::create_directories(out_dir);
  }

  std::string path(const std::string& name) {
    outputs.push_back((fs::path(out_dir) / name).string());
    return outputs.back();
  }

  void write_manifest(const std::string& subcommand) {
    json man{{"version", vortex::kVersion},
             {"subcommand", subcommand},
             {"seed", seed},
             {"config_path", config_path.empty() ? "<defaults>" : config_path},
             {"config", config_snapshot(cfg)},
             {"atoms_path", atoms_path.empty() ? "<generated>" : atoms_path},
             {"outputs", outputs},
             {"wall_ms", timer.timings}};
    vortex::write_text_file((fs::path(out_dir) / "run_manifest.json").string(), man.dump(2) + "\n");
  }
};

int cmd_validate(RunContext& rc) {
  const vortex::ValidationReport rep = vortex::validate_assumptions(rc.cfg);
  for (const auto& c : rep.checks)
    std::printf("%-12s %s  margin=%.6g  (%s)\n", c.name.c_str(), c.pass ? "pass" : "FAIL",
                c.margin, c.detail.c_str());
  rc.timer.mark("validate");
  if (!rc.out_dir.empty()) {
    rc.ensure_out();
    vortex::write_text_file(rc.path("validation.json"), vortex::validation_json(rep).dump(2) + "\n");
    rc.write_manifest("validate");
  }
  return rep.all_pass() ? 0 : 2;
}

int cmd_solve(RunContext& rc) {
  rc.ensure_out();
  vortex::Cloud sigma = rc.load_sigma(vortex::AtomGenOptions{});
  rc.timer.mark("setup");
  auto [state, rep] = vortex::solve_dual(sigma, rc.cfg);
  rc.timer.mark("solve");
  std::printf("converged in %d iterations: J=%.8g K=%.8g m2=%.8g gap=%.3g residual=%.3g\n",
              rep.iterations, rep.J, rep.K, rep.m2, rep.gap, rep.boundary_residual);
  vortex::write_particles_csv(rc.path("particles.csv"), state.sigma);
  vortex::write_boundary_csv(rc.path("boundary.csv"), state.boundary, rc.cfg.frame());
  vortex::write_text_file(rc.path("solve_report.json"),
                          vortex::solve_report_json(rep).dump(2) + "\n");
  if (rc.cfg.output.fields) {
    const vortex::FieldGrid fg = vortex::reconstruct_fields(state, rc.cfg, rc.cfg.output.fields_res,
                                                            rc.cfg.output.fields_res);
    vortex::write_fields_csv(rc.path("fields.csv"), fg);
  }
  rc.timer.mark("write");
  rc.write_manifest("solve");
  return 0;
}

int cmd_simulate(RunContext& rc) {
  if (!rc.cfg.theorem_precondition_ok()) {
    std::fprintf(stderr, "simulate: precondition e^{4MT}(4 l0 + 1) < l + 1 fails\n");
    return 4;
  }
  const vortex::ValidationReport vrep = vortex::validate_assumptions(rc.cfg);
  for (const auto& c : vrep.checks)
    if (!c.pass)
      std::fprintf(stderr, "warning: assumption %s fails (margin %.3g), proceeding\n",
                   c.name.c_str(), c.margin);
  rc.ensure_out();
  vortex::AtomGenOptions gen;
  gen.radius_lo = 0.4 * rc.cfg.l0;
  gen.radius_hi = 0.9 * rc.cfg.l0;
  gen.min_zed = 0.0;
  vortex::Cloud sigma0 = rc.load_sigma(gen);
  rc.timer.mark("setup");
  const vortex::Trajectory traj = vortex::simulate(sigma0, rc.cfg);
  rc.timer.mark("simulate");
  for (int k = 0; k <= rc.cfg.N; ++k) {
    vortex::write_particles_csv(rc.path("particles_t" + std::to_string(k) + ".csv"),
                                traj.sigmas[k]);
    vortex::write_boundary_csv(rc.path("boundary_t" + std::to_string(k) + ".csv"),
                               traj.boundaries[k], rc.cfg.frame());
    if (rc.cfg.output.fields) {
      const vortex::FieldGrid fg = vortex::reconstruct_fields(
          traj.states[k], rc.cfg, rc.cfg.output.fields_res, rc.cfg.output.fields_res);
      vortex::write_fields_csv(rc.path("fields_t" + std::to_string(k) + ".csv"), fg);
    }
    if (rc.cfg.output.meridional && k + 1 <= rc.cfg.N) {
      const auto vw = vortex::meridional_vw(traj, k, rc.cfg);
      vortex::write_meridional_csv(rc.path("meridional_t" + std::to_string(k) + ".csv"), vw);
    }
  }
  vortex::write_text_file(rc.path("diagnostics.json"),
                          vortex::diagnostics_json(traj).dump(2) + "\n");
  rc.timer.mark("write");
  rc.write_manifest("simulate");
  std::printf("simulated %d steps, final support radius %.6g\n", rc.cfg.N,
              traj.diagnostics.back().support_radius);
  return 0;
}

int cmd_oracle(RunContext& rc) {
  rc.ensure_out();
  json checks = json::array();
  bool all = true;
  auto record = [&](const std::string& name, bool pass, double value, double tol) {
    checks.push_back(json{{"name", name}, {"pass", pass}, {"value", value}, {"tolerance", tol}});
    all = all && pass;
    std::printf("%-34s %s  value=%.3e tol=%.1e\n", name.c_str(), pass ? "pass" : "FAIL", value,
                tol);
  };

  std::mt19937_64 rng(rc.seed);
  auto uni = [&rng](double a, double b) { return a + (b - a) * ((rng() >> 11) * 0x1.0p-53); };

  // transport LP against exhaustive matchings on equal-weight instances
  {
    double worst = 0.0;
    for (int rep = 0; rep < 6; ++rep) {
      const int n = 5;
      vortex::Cloud a, b;
      for (int i = 0; i < n; ++i) a.push(uni(0, 2), uni(0, 2), 1.0 / n);
      for (int i = 0; i < n; ++i) b.push(uni(0, 2), uni(0, 2), 1.0 / n);
      const auto sol = vortex::exact_discrete_ot(a, b, vortex::half_quadratic_cost());
      std::vector<int> perm(n);
      for (int i = 0; i < n; ++i) perm[i] = i;
      double best = 1e300;
      do {
        double c = 0.0;
        for (int i = 0; i < n; ++i) {
          const double dx = a.x[i] - b.x[perm[i]], dy = a.y[i] - b.y[perm[i]];
          c += 0.5 * (dx * dx + dy * dy) / n;
        }
        best = std::min(best, c);
      } while (std::next_permutation(perm.begin(), perm.end()));
      worst = std::max(worst, std::abs(sol.value - best));
    }
    record("ot-vs-permutation-enumeration", worst <= 1e-10, worst, 1e-10);
  }
  // duals certify optimality
  {
    double worst = 0.0;
    for (int rep = 0; rep < 6; ++rep) {
      vortex::Cloud a, b;
      for (int i = 0; i < 8; ++i) a.push(uni(0, 2), uni(0, 2), uni(0.5, 1.5));
      for (int i = 0; i < 6; ++i) b.push(uni(0, 2), uni(0, 2), uni(0.5, 1.5));
      a.renormalize_exact();
      b.renormalize_exact();
      const auto sol = vortex::exact_discrete_ot(a, b, vortex::half_quadratic_cost());
      worst = std::max(worst, std::abs(sol.certificate));
    }
    record("ot-dual-certificate", worst <= 1e-9, worst, 1e-9);
  }
  // S derivative against centered differences
  {
    vortex::ModelConfig cfg = vortex::ModelConfig::canonical();
    vortex::Cloud sig;
    sig.push(0.9, 1.1, 0.5);
    sig.push(0.5, 1.6, 0.3);
    sig.push(1.3, 0.7, 0.2);
    std::vector<double> psi{0.1, -0.2, 0.05};
    const vortex::Frame fr = cfg.frame();
    vortex::PotentialEval P = [&](double s, double z, double m) {
      return vortex::potential_P(sig, psi, s, z, m);
    };
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      const double rho = uni(0.05, 0.45);
      const double z = uni(0.0, cfg.H);
      const double m = cfg.ambient.theta0(z);
      const double h = 1e-6;
      const double fd = (vortex::S_functional(P, rho + h, z, m, fr) -
                         vortex::S_functional(P, rho - h, z, m, fr)) /
                        (2.0 * h);
      const double an = vortex::S_derivative(P, rho, z, m, fr);
      worst = std::max(worst, std::abs(fd - an) / std::max(1.0, std::abs(an)));
    }
    record("S-derivative-vs-fd", worst <= 1e-6, worst, 1e-6);
  }
  // supergradient coordinates against finite differences of J
  {
    vortex::ModelConfig cfg = vortex::ModelConfig::canonical();
    cfg.solver.n_s = 128;
    cfg.solver.n_z = 128;
    vortex::Cloud sig = vortex::generate_atoms(rc.seed + 1, vortex::AtomGenOptions{4});
    auto [state, rep] = vortex::solve_dual(sig, cfg);
    double worst = 0.0;
    const double eps = 1e-5;
    for (int i = 0; i < sig.size(); ++i) {
      std::vector<double> pp = state.psi, pm = state.psi;
      pp[i] += eps;
      pm[i] -= eps;
      const double fd =
          (vortex::J_objective(state.sigma, pp, cfg).J - vortex::J_objective(state.sigma, pm, cfg).J) /
          (2.0 * eps);
      worst = std::max(worst, std::abs(fd - (state.cell_mass[i] - state.sigma.w[i])));
    }
    record("supergradient-vs-fd", worst <= 1e-3, worst, 1e-3);
  }
  rc.timer.mark("oracle");
  vortex::write_text_file(rc.path("oracle.json"),
                          json{{"checks", checks}, {"all_pass", all}}.dump(2) + "\n");
  rc.write_manifest("oracle");
  return all ? 0 : 1;
}

int cmd_report(RunContext& rc) {
  const fs::path dir(rc.out_dir.empty() ? "." : rc.out_dir);
  const fs::path diag = dir / "diagnostics.json";
  std::ifstream in(diag);
  if (!in) {
    std::fprintf(stderr, "report: cannot open %s\n", diag.string().c_str());
    return 2;
  }
  json arr = json::parse(in, nullptr, false);
  if (arr.is_discarded() || !arr.is_array() || arr.empty()) {
    std::fprintf(stderr, "report: %s is not a diagnostics array\n", diag.string().c_str());
    return 2;
  }
  std::ostringstream csv, txt;
  csv << "t,J,K,m2,gap,mass,support_radius,w1_step,boundary_residual\n";
  double max_gap = 0, max_res = 0, max_support = 0, sum_w1 = 0;
  auto g17 = [](const json& v) { return vortex::fmt_g17(v.get<double>()); };
  for (const auto& d : arr) {
    csv << g17(d["t"]) << ',' << g17(d["J"]) << ',' << g17(d["K"]) << ',' << g17(d["m2"]) << ','
        << g17(d["gap"]) << ',' << g17(d["mass"]) << ',' << g17(d["support_radius"]) << ','
        << g17(d["w1_step"]) << ',' << g17(d["boundary_residual"]) << '\n';
    max_gap = std::max(max_gap, d["gap"].get<double>());
    max_res = std::max(max_res, d["boundary_residual"].get<double>());
    max_support = std::max(max_support, d["support_radius"].get<double>());
    sum_w1 += d["w1_step"].get<double>();
  }
  txt << "steps:              " << arr.size() << "\n"
      << "final time:         " << arr.back()["t"].get<double>() << "\n"
      << "max duality gap:    " << max_gap << "\n"
      << "max boundary resid: " << max_res << "\n"
      << "max support radius: " << max_support << "\n"
      << "total W1 path:      " << sum_w1 << "\n";
  vortex::write_text_file((dir / "report_series.csv").string(), csv.str());
  vortex::write_text_file((dir / "report_summary.txt").string(), txt.str());
  std::fputs(txt.str().c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"free-boundary vortex solver"};
  app.require_subcommand(1);

  RunContext rc;
  app.add_option("--config", rc.config_path, "configuration file (INI sections)");
  app.add_option("--out", rc.out_dir, "output directory");
  app.add_option("--seed", rc.seed, "seed for generated atom sets");
  app.add_option("--atoms", rc.atoms_path, "particle CSV (i,upsilon,zed,weight)");

  auto* validate = app.add_subcommand("validate", "check profile and forcing assumptions");
  auto* solve = app.add_subcommand("solve", "single dual solve for the free boundary");
  auto* simulate = app.add_subcommand("simulate", "run the N-step transport scheme");
  auto* oracle = app.add_subcommand("oracle", "run the cross-check suites");
  auto* report = app.add_subcommand("report", "aggregate diagnostics.json of a run");
  for (auto* sub : {validate, solve, simulate, oracle, report}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    rc.cfg = rc.config_path.empty() ? vortex::ModelConfig::canonical()
                                    : vortex::load_config(rc.config_path);
    rc.timer.mark("load");
  } catch (const vortex::ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  }

  try {
    if (validate->parsed()) return cmd_validate(rc);
    if (solve->parsed()) return cmd_solve(rc);
    if (simulate->parsed()) return cmd_simulate(rc);
    if (oracle->parsed()) return cmd_oracle(rc);
    if (report->parsed()) return cmd_report(rc);
  } catch (const vortex::SolveError& e) {
    std::fprintf(stderr, "%s (iterations=%d, gap=%.3g)\n", e.what(), e.report.iterations,
                 e.report.gap);
    return 3;
  } catch (const vortex::SupportBoundError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 4;
  } catch (const vortex::ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
