#pragma once

// Exact solver for the 1D Euler Riemann problem (ideal gas) and the
// shock-tube dataset generator built on top of it.

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"

namespace ron::riemann {

struct PrimitiveState {
  double rho = 0.0;
  double u = 0.0;
  double p = 0.0;
};

struct RiemannSetup {
  PrimitiveState left;
  PrimitiveState right;
  double x_c = 0.5;   // discontinuity location
  double x_lo = 0.0;
  double x_hi = 1.0;
  double t_f = 0.1;   // sampling time
  double gamma = 1.4;
  int n_points = 200;

  void validate() const;
};

enum class WaveType { Shock, Rarefaction };

struct StarRegion {
  double p_star = 0.0;
  double u_star = 0.0;
  double rho_star_left = 0.0;
  double rho_star_right = 0.0;
  WaveType left_wave = WaveType::Rarefaction;
  WaveType right_wave = WaveType::Rarefaction;
  int iterations = 0;
  double residual = 0.0;  // |f_L + f_R + du| at p_star
};

// Toro's pressure function for one side: f branch value and its derivative
// with respect to the trial pressure. Shock branch from the Rankine-Hugoniot
// conditions, rarefaction branch from the isentropic relations.
struct PressureFn {
  double f = 0.0;
  double df = 0.0;
};
PressureFn pressure_function(double p, const PrimitiveState& s, double gamma);

// Solve for the star region. Newton seeded with the two-rarefaction guess,
// guarded by a maintained bisection bracket; iterates in log(p) when the
// pressure ratio across the interface exceeds 1e6.
StarRegion solve_star(const RiemannSetup& setup);

// Self-similar solution at xi = (x - x_c)/t.
PrimitiveState sample_solution(const StarRegion& star, const RiemannSetup& setup, double x,
                               double t);

struct Trajectory {
  double p_l = 0.0;
  std::vector<double> x;
  std::vector<double> rho;
  std::vector<double> u;
  std::vector<double> p;
};

enum class CaseName { LPR, IPR, HPR, Custom };

std::string case_to_string(CaseName c);
CaseName case_from_string(const std::string& s);

// Dataset of trajectories over a family of left pressures.
struct Dataset {
  CaseName case_name = CaseName::Custom;
  std::string case_label;       // preset label as requested ("lpr", "ipr-fig5", ...)
  RiemannSetup setup_template;  // left.p is a placeholder, overwritten per sample
  double p_l_lo = 0.0;
  double p_l_hi = 0.0;
  std::vector<Trajectory> trajectories;
  std::vector<int> train_indices;
  std::vector<int> test_indices;
  bool log_transformed = false;
  std::uint64_t seed = 0;

  int n_samples() const { return static_cast<int>(trajectories.size()); }
  int n_points() const { return setup_template.n_points; }
};

struct CaseSpec {
  CaseName name;
  std::string label;
  RiemannSetup setup;  // setup.left.p ignored
  double p_l_lo;
  double p_l_hi;
  bool recommend_log;  // extreme ratio cases train on log(rho), log(p)
};

// Presets: lpr, ipr, hpr per the primary case definitions; lpr-fig5 and
// ipr-fig5 expose the alternative pressure ranges.
CaseSpec case_spec(const std::string& label);

struct GenerateOptions {
  int n_samples = 500;
  int n_points = 200;
  int n_train = 400;
  std::uint64_t seed = 0;
  int max_threads = 0;  // 0 = thread_cap()
};

// Equispaced p_l sweep (endpoints included), exact trajectories, seeded
// Fisher-Yates train/test split. Trajectories may be solved in parallel;
// output ordering is by sample index regardless.
Dataset generate_dataset(const CaseSpec& spec, const GenerateOptions& opts);

// Natural log of rho and p (velocity untouched); inverse applies exp.
Dataset log_transform(const Dataset& ds);
Dataset inverse_log_transform(const Dataset& ds);

}  // namespace ron::riemann
