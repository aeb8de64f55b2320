#include "riemann.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

namespace ron::riemann {

void RiemannSetup::validate() const {
  if (!(left.rho > 0.0) || !(left.p > 0.0)) fail_config("left state must have rho > 0 and p > 0");
  if (!(right.rho > 0.0) || !(right.p > 0.0))
    fail_config("right state must have rho > 0 and p > 0");
  if (!(x_lo < x_c && x_c < x_hi)) fail_config("require x_lo < x_c < x_hi");
  if (!(t_f > 0.0)) fail_config("final time must be positive");
  if (!(gamma > 1.0)) fail_config("gamma must exceed 1");
  if (n_points < 2) fail_config("need at least 2 grid points");
}

namespace {

double sound_speed(const PrimitiveState& s, double gamma) { return std::sqrt(gamma * s.p / s.rho); }

}  // namespace

PressureFn pressure_function(double p, const PrimitiveState& s, double gamma) {
  if (!(p > 0.0)) fail_numeric("pressure_function: trial pressure must be positive");
  PressureFn out;
  const double a = sound_speed(s, gamma);
  if (p > s.p) {
    // shock branch
    const double A = 2.0 / ((gamma + 1.0) * s.rho);
    const double B = (gamma - 1.0) / (gamma + 1.0) * s.p;
    const double root = std::sqrt(A / (p + B));
    out.f = (p - s.p) * root;
    out.df = root * (1.0 - 0.5 * (p - s.p) / (p + B));
  } else {
    // rarefaction branch
    const double expo = (gamma - 1.0) / (2.0 * gamma);
    const double ratio = std::pow(p / s.p, expo);
    out.f = 2.0 * a / (gamma - 1.0) * (ratio - 1.0);
    out.df = 1.0 / (s.rho * a) * std::pow(p / s.p, -(gamma + 1.0) / (2.0 * gamma));
  }
  if (!std::isfinite(out.f) || !std::isfinite(out.df))
    fail_numeric("pressure_function: non-finite branch value (extreme ratio)");
  return out;
}

namespace {

struct TotalFn {
  const RiemannSetup& s;
  double operator()(double p, double* dfdp = nullptr) const {
    PressureFn l = pressure_function(p, s.left, s.gamma);
    PressureFn r = pressure_function(p, s.right, s.gamma);
    if (dfdp) *dfdp = l.df + r.df;
    return l.f + r.f + (s.right.u - s.left.u);
  }
};

// Two-rarefaction approximation (also the vacuum positivity check).
double two_rarefaction_guess(const RiemannSetup& s) {
  const double g = s.gamma;
  const double aL = sound_speed(s.left, g);
  const double aR = sound_speed(s.right, g);
  const double z = (g - 1.0) / (2.0 * g);
  const double num = aL + aR - 0.5 * (g - 1.0) * (s.right.u - s.left.u);
  if (!(num > 0.0)) fail_numeric("vacuum generation: two-rarefaction pressure is non-positive");
  const double den = aL / std::pow(s.left.p, z) + aR / std::pow(s.right.p, z);
  return std::pow(num / den, 1.0 / z);
}

}  // namespace

StarRegion solve_star(const RiemannSetup& setup) {
  setup.validate();
  TotalFn F{setup};

  const double p_min = std::min(setup.left.p, setup.right.p);
  const double p_max = std::max(setup.left.p, setup.right.p);
  const bool log_space = (p_max / p_min) > 1e6;

  double guess = two_rarefaction_guess(setup);
  if (!(guess > 0.0) || !std::isfinite(guess)) guess = 0.5 * (setup.left.p + setup.right.p);

  // Establish a bracket [lo, hi] with F(lo) < 0 < F(hi). F is strictly
  // increasing in p, F -> -inf as p -> 0+ (rarefaction branches).
  double lo = std::min(guess, p_min);
  double hi = std::max(guess, p_max);
  for (int i = 0; i < 600 && F(lo) > 0.0; ++i) lo *= 0.5;
  for (int i = 0; i < 600 && F(hi) < 0.0; ++i) hi *= 2.0;
  if (F(lo) > 0.0 || F(hi) < 0.0) fail_numeric("solve_star: failed to bracket star pressure");

  double p = std::clamp(guess, lo, hi);
  const double tol = 1e-14;
  int iters = 0;
  double residual = 0.0;
  bool converged = false;
  for (; iters < 200; ++iters) {
    double dfdp = 0.0;
    residual = F(p, &dfdp);
    if (std::abs(residual) <= tol * std::max(1.0, p)) {
      converged = true;
      break;
    }
    if (residual > 0.0) {
      hi = std::min(hi, p);
    } else {
      lo = std::max(lo, p);
    }
    double p_next;
    if (log_space) {
      // iterate in log(p): d/dlog(p) F = p * dF/dp
      const double step = residual / (dfdp * p);
      p_next = p * std::exp(-step);
    } else {
      p_next = p - residual / dfdp;
    }
    if (!(p_next > lo && p_next < hi) || !std::isfinite(p_next)) {
      p_next = 0.5 * (lo + hi);  // bisection fallback keeps the bracket shrinking
    }
    if (p_next == p) {
      converged = true;  // fixed point at machine resolution
      break;
    }
    p = p_next;
  }
  residual = F(p);
  if (!converged && std::abs(residual) > 1e-10 * std::max(1.0, p)) {
    fail_numeric("solve_star: no convergence; last bracket [" + std::to_string(lo) + ", " +
                 std::to_string(hi) + "]");
  }

  StarRegion star;
  star.p_star = p;
  star.iterations = iters;
  star.residual = std::abs(residual);
  const PressureFn fl = pressure_function(p, setup.left, setup.gamma);
  const PressureFn fr = pressure_function(p, setup.right, setup.gamma);
  star.u_star = 0.5 * (setup.left.u + setup.right.u) + 0.5 * (fr.f - fl.f);
  star.left_wave = p > setup.left.p ? WaveType::Shock : WaveType::Rarefaction;
  star.right_wave = p > setup.right.p ? WaveType::Shock : WaveType::Rarefaction;

  const double g = setup.gamma;
  const double gr = (g - 1.0) / (g + 1.0);
  auto star_density = [&](const PrimitiveState& s, WaveType w) {
    const double pr = p / s.p;
    if (w == WaveType::Shock) return s.rho * (pr + gr) / (gr * pr + 1.0);
    return s.rho * std::pow(pr, 1.0 / g);
  };
  star.rho_star_left = star_density(setup.left, star.left_wave);
  star.rho_star_right = star_density(setup.right, star.right_wave);
  return star;
}

PrimitiveState sample_solution(const StarRegion& star, const RiemannSetup& setup, double x,
                               double t) {
  if (!(t > 0.0)) fail_config("sample_solution: t must be positive");
  const double xi = (x - setup.x_c) / t;
  const double g = setup.gamma;
  const double gr = (g - 1.0) / (g + 1.0);
  const double p_ = star.p_star;
  const double u_ = star.u_star;

  if (xi < u_) {
    const PrimitiveState& L = setup.left;
    const double aL = sound_speed(L, g);
    if (star.left_wave == WaveType::Shock) {
      const double sL = L.u - aL * std::sqrt((g + 1.0) / (2.0 * g) * p_ / L.p +
                                             (g - 1.0) / (2.0 * g));
      if (xi < sL) return L;
      return {star.rho_star_left, u_, p_};
    }
    const double head = L.u - aL;
    if (xi < head) return L;
    const double aL_ = aL * std::pow(p_ / L.p, (g - 1.0) / (2.0 * g));
    const double tail = u_ - aL_;
    if (xi > tail) return {star.rho_star_left, u_, p_};
    // inside the left fan
    const double factor = 2.0 / (g + 1.0) + gr / aL * (L.u - xi);
    PrimitiveState q;
    q.rho = L.rho * std::pow(factor, 2.0 / (g - 1.0));
    q.u = 2.0 / (g + 1.0) * (aL + 0.5 * (g - 1.0) * L.u + xi);
    q.p = L.p * std::pow(factor, 2.0 * g / (g - 1.0));
    return q;
  }

  const PrimitiveState& R = setup.right;
  const double aR = sound_speed(R, g);
  if (star.right_wave == WaveType::Shock) {
    const double sR = R.u + aR * std::sqrt((g + 1.0) / (2.0 * g) * p_ / R.p +
                                           (g - 1.0) / (2.0 * g));
    if (xi > sR) return R;
    return {star.rho_star_right, u_, p_};
  }
  const double head = R.u + aR;
  if (xi > head) return R;
  const double aR_ = aR * std::pow(p_ / R.p, (g - 1.0) / (2.0 * g));
  const double tail = u_ + aR_;
  if (xi < tail) return {star.rho_star_right, u_, p_};
  // inside the right fan
  const double factor = 2.0 / (g + 1.0) - gr / aR * (R.u - xi);
  PrimitiveState q;
  q.rho = R.rho * std::pow(factor, 2.0 / (g - 1.0));
  q.u = 2.0 / (g + 1.0) * (-aR + 0.5 * (g - 1.0) * R.u + xi);
  q.p = R.p * std::pow(factor, 2.0 * g / (g - 1.0));
  return q;
}

std::string case_to_string(CaseName c) {
  switch (c) {
    case CaseName::LPR: return "LPR";
    case CaseName::IPR: return "IPR";
    case CaseName::HPR: return "HPR";
    case CaseName::Custom: return "Custom";
  }
  return "Custom";
}

CaseName case_from_string(const std::string& s) {
  if (s == "LPR") return CaseName::LPR;
  if (s == "IPR") return CaseName::IPR;
  if (s == "HPR") return CaseName::HPR;
  if (s == "Custom") return CaseName::Custom;
  fail_config("unknown case name: " + s);
}

CaseSpec case_spec(const std::string& label) {
  CaseSpec c;
  c.label = label;
  c.recommend_log = false;
  if (label == "lpr") {
    c.name = CaseName::LPR;
    c.setup = {{1.0, 0.0, 1.0}, {0.125, 0.0, 0.1}, 0.5, 0.0, 1.0, 0.1, 1.4, 200};
    c.p_l_lo = 1.0;
    c.p_l_hi = 5.0;
  } else if (label == "ipr") {
    c.name = CaseName::IPR;
    c.setup = {{2.0, 0.0, 50.0}, {0.125, 0.0, 0.1}, 0.5, -1.0, 2.0, 0.1, 1.4, 200};
    c.p_l_lo = 50.0;
    c.p_l_hi = 100.0;
  } else if (label == "hpr") {
    c.name = CaseName::HPR;
    c.setup = {{2.0, 0.0, 1e9}, {0.001, 0.0, 1.0}, -10.0, -20.0, 20.0, 1e-4, 1.4, 200};
    c.p_l_lo = 1e9;
    c.p_l_hi = 1e10;
    c.recommend_log = true;
  } else if (label == "lpr-fig5") {
    // alternative range quoted alongside the main LPR definition
    c.name = CaseName::LPR;
    c.setup = {{1.0, 0.0, 10.0}, {0.125, 0.0, 0.1}, 0.5, 0.0, 1.0, 0.1, 1.4, 200};
    c.p_l_lo = 10.0;
    c.p_l_hi = 50.0;
  } else if (label == "ipr-fig5") {
    c.name = CaseName::IPR;
    c.setup = {{2.0, 0.0, 500.0}, {0.125, 0.0, 0.1}, 0.5, -1.0, 2.0, 0.1, 1.4, 200};
    c.p_l_lo = 500.0;
    c.p_l_hi = 1000.0;
  } else {
    fail_config("unknown case preset: " + label + " (expected lpr|ipr|hpr|lpr-fig5|ipr-fig5)");
  }
  return c;
}

Dataset generate_dataset(const CaseSpec& spec, const GenerateOptions& opts) {
  if (opts.n_samples < 2) fail_config("generate_dataset: need at least 2 samples");
  if (opts.n_train <= 0 || opts.n_train >= opts.n_samples)
    fail_config("generate_dataset: train count must be in (0, n_samples)");

  Dataset ds;
  ds.case_name = spec.name;
  ds.case_label = spec.label;
  ds.setup_template = spec.setup;
  ds.setup_template.n_points = opts.n_points;
  ds.p_l_lo = spec.p_l_lo;
  ds.p_l_hi = spec.p_l_hi;
  ds.seed = opts.seed;
  ds.trajectories.resize(opts.n_samples);

  std::vector<double> grid(opts.n_points);
  for (int i = 0; i < opts.n_points; ++i) {
    grid[i] = spec.setup.x_lo +
              i * (spec.setup.x_hi - spec.setup.x_lo) / static_cast<double>(opts.n_points - 1);
  }

  std::string failure;
  std::mutex fail_mu;
  parallel_for(
      opts.n_samples,
      [&](int s) {
        const double p_l =
            spec.p_l_lo + s * (spec.p_l_hi - spec.p_l_lo) / static_cast<double>(opts.n_samples - 1);
        RiemannSetup setup = ds.setup_template;
        setup.left.p = p_l;
        Trajectory traj;
        traj.p_l = p_l;
        traj.x = grid;
        traj.rho.resize(opts.n_points);
        traj.u.resize(opts.n_points);
        traj.p.resize(opts.n_points);
        try {
          StarRegion star = solve_star(setup);
          for (int i = 0; i < opts.n_points; ++i) {
            PrimitiveState q = sample_solution(star, setup, grid[i], setup.t_f);
            traj.rho[i] = q.rho;
            traj.u[i] = q.u;
            traj.p[i] = q.p;
          }
        } catch (const Error& e) {
          std::lock_guard<std::mutex> lk(fail_mu);
          if (failure.empty())
            failure = "sample p_l=" + std::to_string(p_l) + " failed: " + e.what();
          return;
        }
        ds.trajectories[s] = std::move(traj);
      },
      opts.max_threads);
  if (!failure.empty()) fail_numeric("generate_dataset aborted: " + failure);

  std::vector<int> order(opts.n_samples);
  for (int i = 0; i < opts.n_samples; ++i) order[i] = i;
  Rng rng(opts.seed);
  shuffle(order, rng);
  ds.train_indices.assign(order.begin(), order.begin() + opts.n_train);
  ds.test_indices.assign(order.begin() + opts.n_train, order.end());
  return ds;
}

namespace {

Dataset transform_fields(const Dataset& ds, bool forward) {
  Dataset out = ds;
  for (auto& t : out.trajectories) {
    for (int i = 0; i < static_cast<int>(t.rho.size()); ++i) {
      if (forward) {
        if (!(t.rho[i] > 0.0) || !(t.p[i] > 0.0))
          fail_numeric("log_transform: non-positive rho or p at sample p_l=" +
                       std::to_string(t.p_l));
        t.rho[i] = std::log(t.rho[i]);
        t.p[i] = std::log(t.p[i]);
      } else {
        t.rho[i] = std::exp(t.rho[i]);
        t.p[i] = std::exp(t.p[i]);
      }
    }
  }
  out.log_transformed = forward;
  return out;
}

}  // namespace

Dataset log_transform(const Dataset& ds) {
  if (ds.log_transformed) fail_config("log_transform: dataset already transformed");
  return transform_fields(ds, true);
}

Dataset inverse_log_transform(const Dataset& ds) {
  if (!ds.log_transformed) fail_config("inverse_log_transform: dataset is not transformed");
  return transform_fields(ds, false);
}

}  // namespace ron::riemann
