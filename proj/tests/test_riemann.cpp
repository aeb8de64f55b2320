#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dataset_io.hpp"
#include "riemann.hpp"

using namespace ron;
using namespace ron::riemann;

namespace {

// Independent oracle: bisection on the total pressure function, written
// directly from the shock/rarefaction relations (no shared code with the
// solver under test).
double oracle_side_f(double p, double rho_k, double p_k, double gamma) {
  const double a_k = std::sqrt(gamma * p_k / rho_k);
  if (p > p_k) {
    const double A = 2.0 / ((gamma + 1.0) * rho_k);
    const double B = (gamma - 1.0) / (gamma + 1.0) * p_k;
    return (p - p_k) * std::sqrt(A / (p + B));
  }
  return 2.0 * a_k / (gamma - 1.0) * (std::pow(p / p_k, (gamma - 1.0) / (2.0 * gamma)) - 1.0);
}

double oracle_total_f(double p, const RiemannSetup& s) {
  return oracle_side_f(p, s.left.rho, s.left.p, s.gamma) +
         oracle_side_f(p, s.right.rho, s.right.p, s.gamma) + (s.right.u - s.left.u);
}

double bisect_star_pressure(const RiemannSetup& s) {
  double lo = std::min(s.left.p, s.right.p);
  double hi = std::max(s.left.p, s.right.p);
  while (oracle_total_f(lo, s) > 0.0) lo *= 0.5;
  while (oracle_total_f(hi, s) < 0.0) hi *= 2.0;
  for (int i = 0; i < 2000; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double f = oracle_total_f(mid, s);
    if (std::abs(f) < 1e-12 * std::max(1.0, mid)) return mid;
    (f > 0.0 ? hi : lo) = mid;
    if (hi - lo < 1e-15 * hi) break;
  }
  return 0.5 * (lo + hi);
}

RiemannSetup standard_sod() {
  RiemannSetup s;
  s.left = {1.0, 0.0, 1.0};
  s.right = {0.125, 0.0, 0.1};
  s.x_c = 0.5;
  s.x_lo = 0.0;
  s.x_hi = 1.0;
  s.t_f = 0.1;
  return s;
}

}  // namespace

TEST_CASE("pressure function vanishes at the state pressure on both branches") {
  PrimitiveState s{1.3, 0.4, 2.5};
  auto r = pressure_function(2.5, s, 1.4);
  CHECK(r.f == doctest::Approx(0.0).epsilon(1e-14));
  // approaching from both sides stays continuous
  auto lo = pressure_function(2.5 * (1 - 1e-9), s, 1.4);
  auto hi = pressure_function(2.5 * (1 + 1e-9), s, 1.4);
  CHECK(std::abs(lo.f) < 1e-7);
  CHECK(std::abs(hi.f) < 1e-7);
}

TEST_CASE("pressure function derivative is positive and matches finite differences") {
  Rng rng(123);
  for (int i = 0; i < 100; ++i) {
    PrimitiveState s{std::exp(rng.uniform(-2, 2)), rng.uniform(-1, 1), std::exp(rng.uniform(-2, 2))};
    const double p = std::exp(rng.uniform(-2, 2));
    auto r = pressure_function(p, s, 1.4);
    CHECK(r.df > 0.0);
    const double h = 1e-7 * p;
    auto rp = pressure_function(p + h, s, 1.4);
    auto rm = pressure_function(p - h, s, 1.4);
    const double fd = (rp.f - rm.f) / (2 * h);
    CHECK(r.df == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("standard Sod star state matches the bisection oracle") {
  RiemannSetup s = standard_sod();
  const double p_oracle = bisect_star_pressure(s);
  // literature value for the Sod tube
  CHECK(p_oracle == doctest::Approx(0.30313).epsilon(1e-4));

  StarRegion star = solve_star(s);
  CHECK(std::abs(star.p_star - p_oracle) < 1e-8);
  CHECK(star.u_star == doctest::Approx(0.92745).epsilon(1e-4));
  CHECK(star.left_wave == WaveType::Rarefaction);
  CHECK(star.right_wave == WaveType::Shock);
  // residual at the solution (DERIVED from the oracle's total function)
  CHECK(std::abs(oracle_total_f(star.p_star, s)) < 1e-10);
}

TEST_CASE("identical states degenerate to the trivial star region") {
  RiemannSetup s = standard_sod();
  s.right = s.left = {0.7, 0.3, 1.9};
  StarRegion star = solve_star(s);
  CHECK(star.p_star == doctest::Approx(1.9).epsilon(1e-12));
  CHECK(star.u_star == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(star.rho_star_left == doctest::Approx(0.7).epsilon(1e-10));
  CHECK(star.rho_star_right == doctest::Approx(0.7).epsilon(1e-10));
}

TEST_CASE("extreme pressure ratio endpoint converges") {
  RiemannSetup s;
  s.left = {2.0, 0.0, 1e10};
  s.right = {0.001, 0.0, 1.0};
  s.x_c = -10;
  s.x_lo = -20;
  s.x_hi = 20;
  s.t_f = 1e-4;
  StarRegion star = solve_star(s);
  CHECK(star.residual < 1e-10 * std::max(1.0, star.p_star));
  const double p_oracle = bisect_star_pressure(s);
  CHECK(std::abs(star.p_star - p_oracle) / p_oracle < 1e-9);
}

TEST_CASE("vacuum generation is rejected explicitly") {
  RiemannSetup s = standard_sod();
  s.left.u = -50.0;
  s.right.u = 50.0;
  CHECK_THROWS_WITH_AS(solve_star(s), doctest::Contains("vacuum"), Error);
}

TEST_CASE("sampling returns undisturbed states outside the wave fan") {
  RiemannSetup s = standard_sod();
  StarRegion star = solve_star(s);
  auto far_left = sample_solution(star, s, s.x_c - 1e3 * s.t_f, s.t_f);
  CHECK(far_left.rho == s.left.rho);
  CHECK(far_left.u == s.left.u);
  CHECK(far_left.p == s.left.p);
  auto far_right = sample_solution(star, s, s.x_c + 1e3 * s.t_f, s.t_f);
  CHECK(far_right.rho == s.right.rho);
  CHECK(far_right.p == s.right.p);
  // the contact sits at x_c + u* t; just around it pressure equals p*
  auto at_center = sample_solution(star, s, s.x_c, 0.1);
  CHECK(at_center.p == doctest::Approx(star.p_star).epsilon(1e-12));
}

TEST_CASE("Rankine-Hugoniot fluxes match across the sampled shock") {
  RiemannSetup s = standard_sod();
  StarRegion star = solve_star(s);
  REQUIRE(star.right_wave == WaveType::Shock);
  const double g = s.gamma;
  const double aR = std::sqrt(g * s.right.p / s.right.rho);
  const double shock_speed =
      s.right.u + aR * std::sqrt((g + 1.0) / (2.0 * g) * star.p_star / s.right.p +
                                 (g - 1.0) / (2.0 * g));
  const double t = s.t_f;
  const double eps = 1e-9;
  auto pre = sample_solution(star, s, s.x_c + (shock_speed + eps) * t, t);
  auto post = sample_solution(star, s, s.x_c + (shock_speed - eps) * t, t);
  const double mass_pre = pre.rho * (pre.u - shock_speed);
  const double mass_post = post.rho * (post.u - shock_speed);
  CHECK(mass_pre == doctest::Approx(mass_post).epsilon(1e-8));
  const double mom_pre = pre.rho * (pre.u - shock_speed) * (pre.u - shock_speed) + pre.p;
  const double mom_post = post.rho * (post.u - shock_speed) * (post.u - shock_speed) + post.p;
  CHECK(mom_pre == doctest::Approx(mom_post).epsilon(1e-8));
}

TEST_CASE("Riemann invariant is constant through the rarefaction fan") {
  RiemannSetup s = standard_sod();
  StarRegion star = solve_star(s);
  REQUIRE(star.left_wave == WaveType::Rarefaction);
  const double g = s.gamma;
  const double aL = std::sqrt(g * s.left.p / s.left.rho);
  const double head = s.left.u - aL;
  const double aLs = aL * std::pow(star.p_star / s.left.p, (g - 1.0) / (2.0 * g));
  const double tail = star.u_star - aLs;
  const double ref = s.left.u + 2.0 * aL / (g - 1.0);
  for (int i = 1; i < 10; ++i) {
    const double xi = head + (tail - head) * i / 10.0;
    auto q = sample_solution(star, s, s.x_c + xi * s.t_f, s.t_f);
    const double c = std::sqrt(g * q.p / q.rho);
    const double inv = q.u + 2.0 * c / (g - 1.0);
    CHECK(inv == doctest::Approx(ref).epsilon(1e-8));
    // entropy is also constant through the fan
    const double s_ref = s.left.p / std::pow(s.left.rho, g);
    CHECK(q.p / std::pow(q.rho, g) == doctest::Approx(s_ref).epsilon(1e-8));
  }
}

TEST_CASE("1000 random setups across extreme ratios converge tightly") {
  Rng rng(2024);
  int solved = 0;
  while (solved < 1000) {
    RiemannSetup s = standard_sod();
    const double log_ratio = rng.uniform(-10.0, 10.0);  // ratio 1e-10 .. 1e10
    s.left.p = std::pow(10.0, log_ratio);
    s.right.p = 1.0;
    s.left.rho = std::exp(rng.uniform(-3.0, 3.0));
    s.right.rho = std::exp(rng.uniform(-3.0, 3.0));
    s.left.u = rng.uniform(-0.5, 0.5);
    s.right.u = rng.uniform(-0.5, 0.5);
    // skip vacuum-generating configurations
    const double aL = std::sqrt(s.gamma * s.left.p / s.left.rho);
    const double aR = std::sqrt(s.gamma * s.right.p / s.right.rho);
    if (2.0 * (aL + aR) / (s.gamma - 1.0) <= s.right.u - s.left.u) continue;
    StarRegion star = solve_star(s);
    CHECK(star.residual < 1e-10 * std::max(1.0, star.p_star));
    ++solved;
  }
}

TEST_CASE("dataset generation covers the case definitions") {
  auto spec = case_spec("lpr");
  GenerateOptions opts;
  opts.n_samples = 500;
  opts.n_points = 200;
  opts.n_train = 400;
  opts.seed = 7;
  Dataset ds = generate_dataset(spec, opts);
  CHECK(ds.n_samples() == 500);
  CHECK(ds.n_points() == 200);
  CHECK(ds.trajectories.front().p_l == doctest::Approx(1.0));
  CHECK(ds.trajectories.back().p_l == doctest::Approx(5.0));
  CHECK(ds.trajectories[0].x.front() == doctest::Approx(0.0));
  CHECK(ds.trajectories[0].x.back() == doctest::Approx(1.0));
  CHECK(ds.train_indices.size() == 400);
  CHECK(ds.test_indices.size() == 100);

  // split covers every index exactly once
  std::vector<int> seen(500, 0);
  for (int i : ds.train_indices) seen[i]++;
  for (int i : ds.test_indices) seen[i]++;
  for (int c : seen) CHECK(c == 1);

  // monotone grid, positive fields
  for (const auto& t : ds.trajectories) {
    for (std::size_t i = 1; i < t.x.size(); ++i) CHECK(t.x[i] > t.x[i - 1]);
    for (double v : t.rho) CHECK(v > 0.0);
    for (double v : t.p) CHECK(v > 0.0);
  }
}

TEST_CASE("extreme-ratio dataset keeps the undisturbed right density") {
  auto spec = case_spec("hpr");
  GenerateOptions opts;
  opts.n_samples = 20;
  opts.n_points = 200;
  opts.n_train = 16;
  opts.seed = 3;
  Dataset ds = generate_dataset(spec, opts);
  CHECK(ds.trajectories.front().p_l == doctest::Approx(1e9));
  CHECK(ds.trajectories.back().p_l == doctest::Approx(1e10));
  for (const auto& t : ds.trajectories) {
    double min_rho = 1e300;
    for (double v : t.rho) min_rho = std::min(min_rho, v);
    CHECK(min_rho >= 0.001 * (1 - 1e-12));
  }
}

TEST_CASE("same seed gives bit-identical dataset files") {
  auto spec = case_spec("lpr");
  GenerateOptions opts;
  opts.n_samples = 40;
  opts.n_points = 64;
  opts.n_train = 32;
  opts.seed = 42;
  const auto dir = std::filesystem::temp_directory_path();
  const std::string f1 = (dir / "ron_test_ds1.ron1").string();
  const std::string f2 = (dir / "ron_test_ds2.ron1").string();
  io::save_dataset(generate_dataset(spec, opts), f1);
  io::save_dataset(generate_dataset(spec, opts), f2);
  std::ifstream a(f1, std::ios::binary), b(f2, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  CHECK(sa.size() > 0);
  std::remove(f1.c_str());
  std::remove(f2.c_str());
}

TEST_CASE("dataset file round trip preserves everything") {
  auto spec = case_spec("ipr");
  GenerateOptions opts;
  opts.n_samples = 12;
  opts.n_points = 32;
  opts.n_train = 9;
  opts.seed = 5;
  Dataset ds = generate_dataset(spec, opts);
  const auto path =
      (std::filesystem::temp_directory_path() / "ron_test_roundtrip.ron1").string();
  io::save_dataset(ds, path);
  Dataset back = io::load_dataset(path);
  CHECK(back.case_name == ds.case_name);
  CHECK(back.train_indices == ds.train_indices);
  CHECK(back.test_indices == ds.test_indices);
  CHECK(back.seed == ds.seed);
  REQUIRE(back.n_samples() == ds.n_samples());
  for (int s = 0; s < ds.n_samples(); ++s) {
    CHECK(back.trajectories[s].p_l == ds.trajectories[s].p_l);
    CHECK(back.trajectories[s].rho == ds.trajectories[s].rho);
    CHECK(back.trajectories[s].u == ds.trajectories[s].u);
    CHECK(back.trajectories[s].p == ds.trajectories[s].p);
  }
  std::remove(path.c_str());
}

TEST_CASE("log transform round trips and maps unit density to zero") {
  auto spec = case_spec("hpr");
  GenerateOptions opts;
  opts.n_samples = 8;
  opts.n_points = 64;
  opts.n_train = 6;
  opts.seed = 1;
  Dataset ds = generate_dataset(spec, opts);
  Dataset logged = log_transform(ds);
  CHECK(logged.log_transformed);
  CHECK_THROWS_AS(log_transform(logged), Error);

  // undisturbed right pressure is 1 -> log p = 0; left pressures reach ~ln(1e10)
  double max_logp = -1e300, min_logp = 1e300;
  for (const auto& t : logged.trajectories)
    for (double v : t.p) {
      max_logp = std::max(max_logp, v);
      min_logp = std::min(min_logp, v);
    }
  CHECK(min_logp == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(max_logp > 22.0);
  CHECK(max_logp < 24.0);

  Dataset back = inverse_log_transform(logged);
  for (int s = 0; s < ds.n_samples(); ++s) {
    for (int i = 0; i < ds.n_points(); ++i) {
      CHECK(back.trajectories[s].rho[i] ==
            doctest::Approx(ds.trajectories[s].rho[i]).epsilon(1e-12));
      CHECK(back.trajectories[s].p[i] ==
            doctest::Approx(ds.trajectories[s].p[i]).epsilon(1e-12));
      CHECK(back.trajectories[s].u[i] == ds.trajectories[s].u[i]);
    }
  }
}
