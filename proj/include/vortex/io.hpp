#pragma once
// Serialization: CSV for particle clouds, boundaries and field grids, JSON
// for reports, diagnostics and run manifests. Doubles are printed with %.17g
// so identical runs produce byte-identical artifacts.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vortex/boundary.hpp"
#include "vortex/config.hpp"
#include "vortex/dual.hpp"
#include "vortex/dynamics.hpp"
#include "vortex/measure.hpp"
#include "vortex/reconstruction.hpp"

namespace vortex {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

// particles: header i,upsilon,zed,weight
inline void write_particles_csv(const std::string& path, const Cloud& sigma) {
  std::ostringstream os;
  os << "i,upsilon,zed,weight\n";
  for (int i = 0; i < sigma.size(); ++i)
    os << i << ',' << fmt_g17(sigma.x[i]) << ',' << fmt_g17(sigma.y[i]) << ','
       << fmt_g17(sigma.w[i]) << '\n';
  write_text_file(path, os.str());
}

// Loads particles, merges exact duplicates and renormalizes the weights once.
inline Cloud read_particles_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty particle file: " + path);
  if (line.rfind("i,upsilon,zed,weight", 0) != 0)
    throw IoError("bad particle header in " + path);
  Cloud c;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    double idx, ux, zz, ww;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &idx, &ux, &zz, &ww) != 4)
      throw IoError("bad particle row at " + path + ":" + std::to_string(lineno));
    c.push(ux, zz, ww);
  }
  c = c.merged_duplicates();
  c.renormalize_exact();
  return c;
}

// boundary: header z,rho,varsigma
inline void write_boundary_csv(const std::string& path, const FreeBoundary& fb, const Frame& fr) {
  const std::vector<double> sig = varsigma(fb, fr);
  std::ostringstream os;
  os << "z,rho,varsigma\n";
  for (int j = 0; j < fb.size(); ++j)
    os << fmt_g17(fb.z_grid[j]) << ',' << fmt_g17(fb.rho[j]) << ',' << fmt_g17(sig[j]) << '\n';
  write_text_file(path, os.str());
}

inline void write_fields_csv(const std::string& path, const FieldGrid& fg) {
  std::ostringstream os;
  os << "r,z,pressure,theta,u\n";
  for (int iz = 0; iz < fg.nz; ++iz)
    for (int ir = 0; ir < fg.nr; ++ir) {
      const int k = fg.idx(ir, iz);
      if (!fg.inside[k]) continue;
      os << fmt_g17(fg.r_grid[ir]) << ',' << fmt_g17(fg.z_grid[iz]) << ','
         << fmt_g17(fg.pressure[k]) << ',' << fmt_g17(fg.theta[k]) << ',' << fmt_g17(fg.u[k])
         << '\n';
    }
  write_text_file(path, os.str());
}

inline void write_meridional_csv(const std::string& path,
                                 const std::vector<MeridionalSample>& samples) {
  std::ostringstream os;
  os << "r,z,v,w\n";
  for (const auto& m : samples)
    os << fmt_g17(m.r) << ',' << fmt_g17(m.z) << ',' << fmt_g17(m.v) << ',' << fmt_g17(m.w)
       << '\n';
  write_text_file(path, os.str());
}

inline nlohmann::json solve_report_json(const SolveReport& rep) {
  return nlohmann::json{{"J", rep.J},
                        {"K", rep.K},
                        {"m2", rep.m2},
                        {"gap", rep.gap},
                        {"boundary_residual", rep.boundary_residual},
                        {"iterations", rep.iterations},
                        {"converged", rep.converged}};
}

inline nlohmann::json diagnostics_json(const Trajectory& traj) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& d : traj.diagnostics)
    arr.push_back(nlohmann::json{{"t", d.t},
                                 {"J", d.J},
                                 {"K", d.K},
                                 {"m2", d.m2},
                                 {"gap", d.gap},
                                 {"mass", d.mass},
                                 {"support_radius", d.support_radius},
                                 {"w1_step", d.w1_step},
                                 {"boundary_residual", d.boundary_residual}});
  return arr;
}

inline nlohmann::json validation_json(const ValidationReport& rep) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : rep.checks)
    arr.push_back(nlohmann::json{
        {"name", c.name}, {"pass", c.pass}, {"margin", c.margin}, {"detail", c.detail}});
  return nlohmann::json{{"checks", arr}, {"all_pass", rep.all_pass()}};
}

}  // namespace vortex
