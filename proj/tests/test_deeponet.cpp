#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "deeponet.hpp"
#include "fd_check.hpp"

using namespace ron;
using namespace ron::deeponet;

namespace {

riemann::Dataset small_lpr(int n_samples = 48, int n_points = 64, std::uint64_t seed = 7) {
  auto spec = riemann::case_spec("lpr");
  riemann::GenerateOptions o;
  o.n_samples = n_samples;
  o.n_points = n_points;
  o.n_train = n_samples * 4 / 5;
  o.seed = seed;
  return riemann::generate_dataset(spec, o);
}

TrainOptions small_opts() {
  TrainOptions o;
  o.width = 24;
  o.hidden_layers = 3;
  o.steps = 200;
  o.trunk_steps = 300;
  o.branch_steps = 300;
  o.seed = 1;
  return o;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("rowdy activation collapses to a shifted base at init") {
  // single pass-through layer exposes g directly
  nn::MLPConfig cfg{1, {1, 1}, nn::Activation::RowdyTanh};
  Rng rng(3);
  nn::MLP mlp(cfg, rng, "m");
  mlp.weights_w[0].value = {1.0};
  mlp.weights_b[0].value = {0.0};
  mlp.weights_w[1].value = {1.0};
  mlp.weights_b[1].value = {0.0};
  for (double x : {-1.5, -0.2, 0.0, 0.7, 2.0}) {
    ad::Tape t;
    ad::Tensor y = mlp.forward(t, t.constant({1, 1}, {x}));
    // init: a = c = 0.1, a1 = 0 -> g(x) = tanh(10*0.1*x + 0.1) = tanh(x + 0.1)
    CHECK(y.value()[0] == doctest::Approx(std::tanh(x + 0.1)).epsilon(1e-14));
  }

  // amplitude-only setting: a = c = 0, a1 = 0.1, F1 = 0.1, c1 = 0 -> g = sin(x)
  mlp.rowdy[0].a.value[0] = 0.0;
  mlp.rowdy[0].c.value[0] = 0.0;
  mlp.rowdy[0].a1.value[0] = 0.1;
  {
    ad::Tape t;
    ad::Tensor y = mlp.forward(t, t.constant({1, 1}, {0.0}));
    CHECK(y.value()[0] == doctest::Approx(0.0).epsilon(1e-15));
    ad::Tape t2;
    ad::Tensor y2 = mlp.forward(t2, t2.constant({1, 1}, {0.5}));
    CHECK(y2.value()[0] == doctest::Approx(std::sin(0.5)).epsilon(1e-14));
  }
}

TEST_CASE("rowdy parameters are all trainable with correct gradients") {
  nn::MLPConfig cfg{1, {2, 1}, nn::Activation::RowdyTanh};
  Rng rng(5);
  nn::MLP mlp(cfg, rng, "m");
  // move the five scalars off their init so every branch is active
  mlp.rowdy[0].a.value[0] = 0.13;
  mlp.rowdy[0].c.value[0] = -0.05;
  mlp.rowdy[0].a1.value[0] = 0.07;
  mlp.rowdy[0].f1.value[0] = 0.11;
  mlp.rowdy[0].c1.value[0] = 0.02;
  std::vector<ad::Param*> five = {&mlp.rowdy[0].a, &mlp.rowdy[0].c, &mlp.rowdy[0].a1,
                                  &mlp.rowdy[0].f1, &mlp.rowdy[0].c1};
  ron_test::check_gradients(five, [&](ad::Tape& t) {
    ad::Tensor y = mlp.forward(t, t.constant({3, 1}, {0.3, -0.8, 1.2}));
    return ad::mean(ad::mul(y, y));
  });
}

TEST_CASE("rowdy cos base is selectable") {
  nn::MLPConfig cfg{1, {1, 1}, nn::Activation::RowdyCos};
  Rng rng(3);
  nn::MLP mlp(cfg, rng, "m");
  mlp.weights_w[0].value = {1.0};
  mlp.weights_b[0].value = {0.0};
  mlp.weights_w[1].value = {1.0};
  mlp.weights_b[1].value = {0.0};
  ad::Tape t;
  ad::Tensor y = mlp.forward(t, t.constant({1, 1}, {0.4}));
  CHECK(y.value()[0] == doctest::Approx(std::cos(0.4 + 0.1)).epsilon(1e-14));
}

TEST_CASE("contraction equals the explicit triple loop") {
  Rng rng(9);
  const int n = 4, k = 5, n_p = 6;
  std::vector<double> bv(n * k * 3), tv(n_p * k);
  for (auto& v : bv) v = rng.uniform(-1, 1);
  for (auto& v : tv) v = rng.uniform(-1, 1);

  // route the same numbers through a hand-built model via infer()
  auto ds = small_lpr(10, n_p);
  TrainOptions o = small_opts();
  o.width = k;
  o.latent_dim = k;
  o.steps = 0;
  TrainResult r = train_one_step(ds, o);

  // overwrite the last branch layer to a constant output = bv row for a
  // chosen sample; easier: compare Model::infer against the loop on the
  // model's own coefficients and basis
  std::vector<double> p_l = {ds.trajectories[3].p_l, ds.trajectories[7].p_l};
  std::vector<double> fields = r.model.infer(p_l);

  // reproduce with explicit loops
  ad::Tape tape;
  std::vector<double> pl_norm(p_l.size());
  for (std::size_t i = 0; i < p_l.size(); ++i) pl_norm[i] = r.model.norm.norm_p(p_l[i]);
  ad::Tensor coeff =
      r.model.branch.forward(tape, tape.constant({(int)p_l.size(), 1}, pl_norm));
  linalg::Matrix basis = r.model.trunk_basis();
  for (std::size_t s = 0; s < p_l.size(); ++s)
    for (int j = 0; j < n_p; ++j)
      for (int v = 0; v < 3; ++v) {
        double acc = 0;
        for (int kk = 0; kk < k; ++kk)
          acc += coeff.value()[(s * k + kk) * 3 + v] * basis.at(j, kk);
        CHECK(fields[(s * n_p + j) * 3 + v] == doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("zero branch output produces all-zero fields") {
  auto ds = small_lpr(10, 16);
  TrainOptions o = small_opts();
  o.steps = 0;
  TrainResult r = train_one_step(ds, o);
  // zero the final branch layer
  auto& w = r.model.branch.weights_w.back();
  std::fill(w.value.begin(), w.value.end(), 0.0);
  auto& b = r.model.branch.weights_b.back();
  std::fill(b.value.begin(), b.value.end(), 0.0);
  std::vector<double> fields = r.model.infer({1.5, 3.0});
  for (double v : fields) CHECK(v == 0.0);
}

TEST_CASE("rank-1 contraction replicates the trunk profile across samples") {
  auto ds = small_lpr(10, 16);
  TrainOptions o = small_opts();
  o.width = 8;
  o.latent_dim = 1;
  o.steps = 0;
  TrainResult r = train_one_step(ds, o);
  // constant branch output of one: zero weights, bias one
  std::fill(r.model.branch.weights_w.back().value.begin(),
            r.model.branch.weights_w.back().value.end(), 0.0);
  std::fill(r.model.branch.weights_b.back().value.begin(),
            r.model.branch.weights_b.back().value.end(), 1.0);
  std::vector<double> fields = r.model.infer({1.2, 2.7, 4.4});
  linalg::Matrix basis = r.model.trunk_basis();
  for (int s = 0; s < 3; ++s)
    for (int j = 0; j < 16; ++j)
      for (int v = 0; v < 3; ++v)
        CHECK(fields[(s * 16 + j) * 3 + v] == doctest::Approx(basis.at(j, 0)).epsilon(1e-12));
}

TEST_CASE("one-step training descends and is seed-deterministic") {
  auto ds = small_lpr();
  TrainOptions o = small_opts();
  o.steps = 150;
  TrainResult a = train_one_step(ds, o);
  CHECK(a.final_loss < a.first_loss);
  CHECK(a.min_clamped >= 1e-10);

  TrainResult b = train_one_step(ds, o);
  const auto dir = std::filesystem::temp_directory_path();
  const std::string fa = (dir / "ron_don_a.ronw").string();
  const std::string fb = (dir / "ron_don_b.ronw").string();
  save_model(a.model, fa);
  save_model(b.model, fb);
  CHECK(file_bytes(fa) == file_bytes(fb));

  o.seed = 2;
  TrainResult c = train_one_step(ds, o);
  save_model(c.model, fb);
  CHECK(file_bytes(fa) != file_bytes(fb));
  std::remove(fa.c_str());
  std::remove(fb.c_str());
}

TEST_CASE("trunk stage reaches the interpolation regime on a tiny set") {
  auto ds = small_lpr(10, 24);  // 8 train samples -> 24 target columns
  TrainOptions o = small_opts();
  o.width = 32;
  o.latent_dim = 30;  // K >= N_s * V
  o.trunk_steps = 1600;
  TrunkStage st = train_trunk(ds, o);
  CHECK(st.final_loss < 0.02 * st.first_loss);
  CHECK(st.min_clamped >= 1e-10);
  CHECK(st.trunk_outputs.rows == 24);
  CHECK(st.trunk_outputs.cols == 30);
  CHECK(st.a_star.rows == 30);
  CHECK(st.a_star.cols == 24);
}

TEST_CASE("coefficient matrix gradient matches finite differences") {
  Rng rng(21);
  const int n_p = 8, k = 4, cols = 6;
  ad::Param a = ron_test::make_param("A", {k, cols}, rng);
  std::vector<double> tv(n_p * k), uv(n_p * cols);
  for (auto& v : tv) v = rng.uniform(-1, 1);
  for (auto& v : uv) v = rng.uniform(-1, 1);
  ron_test::check_gradients({&a}, [&](ad::Tape& t) {
    ad::Tensor pred = ad::matmul(t.constant({n_p, k}, tv), t.leaf(a));
    ad::Tensor diff = ad::sub(pred, t.constant({n_p, cols}, uv));
    return ad::mean(ad::mul(diff, diff));
  });
}

TEST_CASE("factorization identities hold for both methods on a trained trunk") {
  auto ds = small_lpr();
  TrainOptions o = small_opts();
  o.latent_dim = 10;  // keep K below the numerical rank of the trained basis
  o.trunk_steps = 400;
  TrunkStage st = train_trunk(ds, o);
  double t_max = 0;
  for (double v : st.trunk_outputs.a) t_max = std::max(t_max, std::abs(v));

  for (auto method : {FactorizeMethod::QR, FactorizeMethod::SVD}) {
    CAPTURE(method_to_string(method));
    TwoStepArtifacts art = factorize_trunk(st.trunk_outputs, method);
    const int k = art.r_star.rows;
    // orthonormal columns
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        double acc = 0;
        for (int r = 0; r < st.trunk_outputs.rows; ++r)
          acc += art.q_star.at(r, i) * art.q_star.at(r, j);
        CHECK(std::abs(acc - (i == j ? 1.0 : 0.0)) < 1e-8);
      }
    // reconstruction
    linalg::Matrix rec = linalg::matmul(art.q_star, art.r_star);
    for (std::size_t i = 0; i < rec.a.size(); ++i)
      CHECK(std::abs(rec.a[i] - st.trunk_outputs.a[i]) < 1e-8 * std::max(1.0, t_max));
    // T R^{-1} = Q, with the tolerance scaled by the trunk's conditioning
    // (the acceptance suite checks the raw 1e-8 bound on the full-size trunk)
    auto svd = linalg::jacobi_svd(st.trunk_outputs);
    const double kappa = svd.sigma.front() / svd.sigma.back();
    const double tol = std::max(1e-10, 64 * 2.2e-16 * kappa);
    linalg::Matrix t_rinv = linalg::matmul(st.trunk_outputs, art.r_inv);
    for (std::size_t i = 0; i < t_rinv.a.size(); ++i)
      CHECK(std::abs(t_rinv.a[i] - art.q_star.a[i]) < tol);
  }
}

TEST_CASE("factorization rejects rank-deficient trunks unless the fallback is on") {
  Rng rng(31);
  const int n_p = 30, k = 8;
  linalg::Matrix low(n_p, k);  // rank 2
  std::vector<double> u1(n_p), u2(n_p), v1(k), v2(k);
  for (auto& v : u1) v = rng.uniform(-1, 1);
  for (auto& v : u2) v = rng.uniform(-1, 1);
  for (auto& v : v1) v = rng.uniform(-1, 1);
  for (auto& v : v2) v = rng.uniform(-1, 1);
  for (int i = 0; i < n_p; ++i)
    for (int j = 0; j < k; ++j) low.at(i, j) = u1[i] * v1[j] + 0.3 * u2[i] * v2[j];

  CHECK_THROWS_WITH_AS(factorize_trunk(low, FactorizeMethod::SVD),
                       doctest::Contains("pseudo-inverse"), Error);
  TwoStepArtifacts art = factorize_trunk(low, FactorizeMethod::SVD, true);
  REQUIRE(art.sigma.size() == k);
  for (int j = 2; j < k; ++j) CHECK(art.sigma[j] < 1e-10 * art.sigma[0]);
}

TEST_CASE("branch stage fits a zero-variance target to near zero") {
  auto ds = small_lpr(20, 16);
  const int k = 6;
  const int n_tr = static_cast<int>(ds.train_indices.size());
  TwoStepArtifacts art;
  art.method = FactorizeMethod::SVD;
  art.r_star = linalg::Matrix(k, k);
  for (int i = 0; i < k; ++i) art.r_star.at(i, i) = 1.0;
  art.r_inv = art.r_star;
  art.a_star = linalg::Matrix(k, n_tr * 3);
  for (int kk = 0; kk < k; ++kk)
    for (int s = 0; s < n_tr; ++s)
      for (int v = 0; v < 3; ++v)
        art.a_star.at(kk, s * 3 + v) = 0.1 * kk + 0.7 * v;  // same for every sample
  TrainOptions o = small_opts();
  o.width = 16;
  o.latent_dim = k;
  o.branch_steps = 1200;
  double final_loss = 1e9;
  nn::MLP branch = train_branch(ds, art, o, &final_loss);
  CHECK(final_loss < 1e-4);
}

TEST_CASE("assembled two-step model reproduces the trunk-stage fit algebraically") {
  auto ds = small_lpr();
  TrainOptions o = small_opts();
  TrunkStage st = train_trunk(ds, o);
  TwoStepArtifacts art = factorize_trunk(st.trunk_outputs, FactorizeMethod::SVD, true);
  art.a_star = st.a_star;
  // branch output == R* A_hat* implies predictions == T A*: check the algebra
  linalg::Matrix via_q = linalg::matmul(art.q_star, linalg::matmul(art.r_star, art.a_star));
  linalg::Matrix direct = linalg::matmul(st.trunk_outputs, art.a_star);
  double d_max = 0;
  for (double v : direct.a) d_max = std::max(d_max, std::abs(v));
  for (std::size_t i = 0; i < via_q.a.size(); ++i)
    CHECK(std::abs(via_q.a[i] - direct.a[i]) < 1e-8 * std::max(1.0, d_max));
}

TEST_CASE("two-step end to end on a reduced problem") {
  auto ds = small_lpr(60, 48);
  TrainOptions o = small_opts();
  o.width = 40;
  o.latent_dim = 20;
  o.hidden_layers = 3;
  o.trunk_steps = 1500;
  o.branch_steps = 1200;
  o.pseudo_inverse = true;  // warm-started trunks stay near their init rank
  TrainResult r = train_two_step(ds, o);
  REQUIRE(r.model.artifacts.has_value());

  auto rep = r.model.evaluate(ds, ds.test_indices);
  CHECK(rep.total_pct < 12.0);  // reduced-scale sanity band
  CHECK(rep.total_pct > 0.0);

  SUBCASE("truncation endpoints") {
    auto full = r.model.evaluate(ds, ds.test_indices);
    auto at_k = r.model.evaluate(ds, ds.test_indices, r.model.latent_dim);
    CHECK(full.total_pct == at_k.total_pct);  // bit-identical path

    std::vector<double> zero = r.model.infer({2.0}, 0);
    for (double v : zero) CHECK(v == 0.0);

    CHECK_THROWS_AS(r.model.infer({2.0}, r.model.latent_dim + 1), Error);
  }

  SUBCASE("checkpoint round trip preserves inference bit-for-bit") {
    const auto path = (std::filesystem::temp_directory_path() / "ron_don_rt.ronw").string();
    save_model(r.model, path);
    Model back = load_model(path);
    std::vector<double> a = r.model.infer({1.3, 4.2});
    std::vector<double> b = back.infer({1.3, 4.2});
    CHECK(a == b);
    std::remove(path.c_str());
  }

  SUBCASE("truncation requires the svd method") {
    TrainOptions oq = o;
    oq.method = FactorizeMethod::QR;
    oq.pseudo_inverse = true;
    TrainResult rq = train_two_step(ds, oq);
    CHECK_THROWS_AS(rq.model.infer({2.0}, 5), Error);
  }
}

TEST_CASE("extreme-ratio training in log space keeps inference positive") {
  auto spec = riemann::case_spec("hpr");
  riemann::GenerateOptions go;
  go.n_samples = 30;
  go.n_points = 32;
  go.n_train = 24;
  go.seed = 11;
  auto ds = riemann::generate_dataset(spec, go);
  TrainOptions o = small_opts();
  o.width = 24;
  o.latent_dim = 12;
  o.trunk_steps = 400;
  o.branch_steps = 400;
  o.log_fields = true;
  o.pseudo_inverse = true;
  TrainResult r = train_two_step(ds, o);
  CHECK(r.model.norm.log_fields);
  CHECK(r.model.norm.log10_p);
  // no clamp in log space
  CHECK(r.min_clamped == std::numeric_limits<double>::infinity());
  std::vector<double> fields = r.model.infer({3e9, 7e9});
  for (std::size_t i = 0; i < fields.size(); i += 3) {
    CHECK(fields[i] >= 1e-10);      // rho
    CHECK(fields[i + 2] >= 1e-10);  // p
  }
}

TEST_CASE("ensemble statistics cover every member deterministically") {
  auto ds = small_lpr(24, 16);
  TrainOptions o = small_opts();
  o.width = 12;
  o.latent_dim = 6;
  o.trunk_steps = 60;
  o.branch_steps = 60;
  o.pseudo_inverse = true;
  EnsembleResult ens = train_ensemble(ds, o, 3, true);
  CHECK(ens.members.size() == 3);
  CHECK(ens.stats.n_runs == 3);
  CHECK(ens.reports[ens.best_member].total_pct <= ens.reports[0].total_pct);
  // member seeds are base + index
  CHECK(ens.members[1].model.seed == o.seed + 1);
}
