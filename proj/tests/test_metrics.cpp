#include <doctest.h>

#include <vector>

#include "metrics.hpp"

using namespace ron;
using namespace ron::metrics;

TEST_CASE("exact prediction scores zero everywhere") {
  std::vector<double> g = {1, 2, 3, 4, 5, 6};  // 1 sample, 2 points, 3 vars
  auto rep = relative_l2(g, g, 1, 2);
  CHECK(rep.l2_rho_pct == 0.0);
  CHECK(rep.l2_u_pct == 0.0);
  CHECK(rep.l2_p_pct == 0.0);
  CHECK(rep.total_pct == 0.0);
}

TEST_CASE("doubling the field gives exactly 100 percent") {
  std::vector<double> g = {1, 2, 3, 4, 5, 6, 7, 8, 9, 1, 2, 3};
  std::vector<double> d(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) d[i] = 2 * g[i];
  auto rep = relative_l2(d, g, 2, 2);
  CHECK(rep.l2_rho_pct == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(rep.l2_u_pct == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(rep.l2_p_pct == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(rep.total_pct == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("hand-worked single sample: error (3,4) against norm 10 is 50 percent") {
  // rho channel: G = (6, 8) so |G| = 10; D - G = (3, 4) so |D - G| = 5
  std::vector<double> g = {6, 0.5, 1.0, 8, 0.5, 1.0};
  std::vector<double> d = {9, 0.5, 1.0, 12, 0.5, 1.0};
  auto rep = relative_l2(d, g, 1, 2);
  CHECK(rep.l2_rho_pct == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(rep.l2_u_pct == 0.0);
  CHECK(rep.l2_p_pct == 0.0);
  CHECK(rep.total_pct == doctest::Approx(50.0 / 3).epsilon(1e-12));
}

TEST_CASE("metric is invariant to joint positive scaling") {
  Rng rng(3);
  const int n = 4, np = 7;
  std::vector<double> g(n * np * 3), d(n * np * 3), g2, d2;
  for (auto& v : g) v = rng.uniform(0.5, 2.0);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] + rng.uniform(-0.1, 0.1);
  g2 = g;
  d2 = d;
  for (auto& v : g2) v *= 37.5;
  for (auto& v : d2) v *= 37.5;
  auto a = relative_l2(d, g, n, np);
  auto b = relative_l2(d2, g2, n, np);
  CHECK(a.total_pct == doctest::Approx(b.total_pct).epsilon(1e-12));
}

TEST_CASE("metric is permutation invariant over samples") {
  Rng rng(4);
  const int n = 5, np = 3;
  std::vector<double> g(n * np * 3), d(n * np * 3);
  for (auto& v : g) v = rng.uniform(0.5, 2.0);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] + rng.uniform(-0.1, 0.1);
  auto base = relative_l2(d, g, n, np);
  // rotate samples by two
  std::vector<double> g_rot(g.size()), d_rot(d.size());
  const std::size_t block = np * 3;
  for (int s = 0; s < n; ++s) {
    std::copy_n(g.begin() + s * block, block, g_rot.begin() + ((s + 2) % n) * block);
    std::copy_n(d.begin() + s * block, block, d_rot.begin() + ((s + 2) % n) * block);
  }
  auto rot = relative_l2(d_rot, g_rot, n, np);
  CHECK(base.total_pct == doctest::Approx(rot.total_pct).epsilon(1e-12));
}

TEST_CASE("zero-norm ground truth names the offending sample") {
  std::vector<double> g = {0, 1, 1, 0, 1, 1};  // rho channel all zero
  std::vector<double> d = {1, 1, 1, 1, 1, 1};
  CHECK_THROWS_WITH_AS(relative_l2(d, g, 1, 2), doctest::Contains("sample 0"), Error);
}

TEST_CASE("ensemble statistics") {
  ErrorReport a, b;
  a.l2_rho_pct = a.l2_u_pct = a.l2_p_pct = a.total_pct = 1.0;
  b = a;

  SUBCASE("identical reports have zero spread") {
    auto st = ensemble_stats({a, b});
    CHECK(st.mean[3] == 1.0);
    CHECK(st.stddev[3] == 0.0);
  }

  SUBCASE("two reports average and spread with the sample denominator") {
    b.l2_rho_pct = b.l2_u_pct = b.l2_p_pct = b.total_pct = 3.0;
    auto st = ensemble_stats({a, b});
    CHECK(st.mean[3] == doctest::Approx(2.0));
    CHECK(st.stddev[3] == doctest::Approx(std::sqrt(2.0)));  // n-1 denominator
  }

  SUBCASE("a single report is rejected") { CHECK_THROWS_AS(ensemble_stats({a}), Error); }
}
