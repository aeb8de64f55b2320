#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "fd_check.hpp"
#include "tensor.hpp"

using namespace ron;
using namespace ron::ad;
using ron_test::check_gradients;
using ron_test::make_param;



TEST_CASE("matmul against identity and explicit loops") {
  Tape t;
  Rng rng(1);
  std::vector<double> eye(9, 0.0);
  eye[0] = eye[4] = eye[8] = 1.0;
  std::vector<double> av(9);
  for (auto& v : av) v = rng.uniform(-2, 2);
  Tensor I = t.constant({3, 3}, eye);
  Tensor A = t.constant({3, 3}, av);
  Tensor IA = matmul(I, A);
  for (int i = 0; i < 9; ++i) CHECK(IA.value()[i] == av[i]);

  std::vector<double> bv(12);
  for (auto& v : bv) v = rng.uniform(-2, 2);
  Tensor B = t.constant({3, 4}, bv);
  Tensor AB = matmul(A, B);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      double acc = 0;
      for (int k = 0; k < 3; ++k) acc += av[i * 3 + k] * bv[k * 4 + j];
      CHECK(AB.value()[i * 4 + j] == doctest::Approx(acc).epsilon(1e-14));
    }
}

TEST_CASE("shape mismatches are rejected with both shapes named") {
  Tape t;
  Tensor a = t.constant({2, 3}, std::vector<double>(6, 1.0));
  Tensor b = t.constant({2, 2}, std::vector<double>(4, 1.0));
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2,3]"), Error);
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("[2,2]"), Error);
}

TEST_CASE("broadcast is restricted to leading axes") {
  Tape t;
  Tensor a = t.constant({2, 3}, std::vector<double>(6, 2.0));
  Tensor row = t.constant({3}, {1.0, 2.0, 3.0});
  Tensor s = add(a, row);  // trailing suffix broadcast over the leading axis
  CHECK(s.value()[0] == 3.0);
  CHECK(s.value()[5] == 5.0);
  Tensor scalar = t.constant({1}, {10.0});
  CHECK(mul(a, scalar).value()[3] == 20.0);

  Tensor col = t.constant({2, 1}, {1.0, 2.0});
  CHECK_THROWS_AS(add(a, col), Error);  // trailing singleton: not supported
}

TEST_CASE("tanh derivative at zero is one") {
  Param x("x", {1});
  x.value[0] = 0.0;
  Tape t;
  Tensor y = tanh(t.leaf(x));
  t.backward(y);
  CHECK(x.grad[0] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("gelu values at the anchor points") {
  Tape t;
  Tensor x = t.constant({3}, {0.0, 20.0, -20.0});
  Tensor y = gelu(x);
  CHECK(y.value()[0] == 0.0);
  CHECK(y.value()[1] == doctest::Approx(20.0).epsilon(1e-9 / 20.0));
  CHECK(std::abs(y.value()[2]) < 1e-9);
}

TEST_CASE("clamp_min passes gradient only above the threshold") {
  Param x("x", {4});
  x.value = {0.5, 2.0, 1.0, -3.0};
  Tape t;
  Tensor y = clamp_min(t.leaf(x), 1.0);
  CHECK(y.value() == std::vector<double>{1.0, 2.0, 1.0, 1.0});
  t.backward(sum(y));
  CHECK(x.grad == std::vector<double>{0.0, 1.0, 0.0, 0.0});
}

TEST_CASE("repeated backward without re-recording is an error") {
  Param x("x", {2});
  x.value = {1.0, 2.0};
  Tape t;
  Tensor loss = sum(mul(t.leaf(x), t.leaf(x)));
  t.backward(loss);
  CHECK_THROWS_AS(t.backward(loss), Error);
}

TEST_CASE("ops do not modify their input buffers") {
  Rng rng(77);
  Param x = make_param("x", {3, 4}, rng);
  const std::vector<double> snapshot = x.value;
  Tape t;
  Tensor lx = t.leaf(x);
  Tensor y = gelu(mul(lx, lx));
  Tensor z = sum(concat({y, scale(lx, 2.0)}, 1));
  t.backward(z);
  CHECK(x.value == snapshot);
}

TEST_CASE("finite-difference checks: elementwise, reductions, shapes") {
  Rng rng(42);
  for (int inst = 0; inst < 20; ++inst) {
    const int rows = 2 + static_cast<int>(rng.next_below(3));
    const int cols = 2 + static_cast<int>(rng.next_below(3));
    Param a = make_param("a", {rows, cols}, rng);
    Param b = make_param("b", {rows, cols}, rng, 0.5, 2.0);  // keep div/log well-behaved
    Param w = make_param("w", {cols, rows}, rng);
    std::vector<double> mix((std::size_t)rows * cols);
    for (auto& v : mix) v = rng.uniform(-1, 1);

    check_gradients({&a, &b}, [&](Tape& t) {
      Tensor ta = t.leaf(a), tb = t.leaf(b);
      Tensor e = add(mul(ta, tb), div(ta, tb));
      e = sub(e, scale(tb, 0.25));
      e = add(e, exp(scale(ta, 0.3)));
      e = add(e, log(tb));
      e = add(e, sin(ta));
      e = add(e, cos(tb));
      e = add(e, gelu(ta));
      e = add(e, tanh(add_const(ta, 0.1)));
      Tensor weighted = mul(e, t.constant({rows, cols}, mix));
      return sum(weighted);
    });

    check_gradients({&a, &w}, [&](Tape& t) {
      Tensor m = matmul(t.leaf(a), t.leaf(w));  // [rows, rows]
      return mean(mul(m, m));
    });

    check_gradients({&a}, [&](Tape& t) {
      Tensor ta = t.leaf(a);
      Tensor s0 = sum(ta, {0});
      Tensor s1 = mean(ta, {1});
      return add(sum(mul(s0, s0)), sum(mul(s1, s1)));
    });

    check_gradients({&a, &b}, [&](Tape& t) {
      Tensor c = concat({t.leaf(a), t.leaf(b)}, 0);
      Tensor sl = slice(c, 0, 1, rows + 1);
      Tensor r = reshape(sl, {cols, rows});
      Tensor p = permute(r, {1, 0});
      return sum(mul(p, p));
    });
  }
}

TEST_CASE("finite-difference checks: broadcast binary ops") {
  Rng rng(43);
  for (int inst = 0; inst < 20; ++inst) {
    const int rows = 2 + static_cast<int>(rng.next_below(3));
    const int cols = 2 + static_cast<int>(rng.next_below(3));
    Param big = make_param("big", {rows, cols}, rng, 0.5, 1.5);
    Param suf = make_param("suffix", {cols}, rng, 0.5, 1.5);
    Param sc = make_param("scalar", {1}, rng, 0.5, 1.5);
    check_gradients({&big, &suf, &sc}, [&](Tape& t) {
      Tensor x = t.leaf(big);
      Tensor y = add(x, t.leaf(suf));
      y = mul(y, t.leaf(sc));
      y = div(y, t.leaf(suf));
      y = sub(y, t.leaf(sc));
      return mean(mul(y, y));
    });
  }
}

TEST_CASE("rank-1 tconv example: kernel of ones duplicates entries") {
  Tape t;
  Tensor u = t.constant({1, 2}, {3.0, 5.0});      // [C=1, W=2]
  Tensor w = t.constant({1, 1, 2}, {1.0, 1.0});   // [C, C', W']
  Tensor up = transpose_conv1d(u, w, 2);
  CHECK(up.shape() == Shape{1, 4});
  CHECK(up.value() == std::vector<double>{3.0, 3.0, 5.0, 5.0});
}

TEST_CASE("tconv doubles the width") {
  Tape t;
  Rng rng(9);
  std::vector<double> uv(3 * 7), wv(3 * 2 * 2);
  for (auto& v : uv) v = rng.uniform(-1, 1);
  for (auto& v : wv) v = rng.uniform(-1, 1);
  Tensor u = t.constant({3, 7}, uv);
  Tensor w = t.constant({3, 2, 2}, wv);
  CHECK(transpose_conv1d(u, w, 2).shape() == Shape{2, 14});
}

TEST_CASE("conv1d matches the brute-force triple loop") {
  Rng rng(11);
  for (int pad : {0, 1}) {
    const int C = 3, Cp = 2, W = 9, Wk = 3;
    std::vector<double> uv(C * W), wv(C * Cp * Wk);
    for (auto& v : uv) v = rng.uniform(-1, 1);
    for (auto& v : wv) v = rng.uniform(-1, 1);
    Tape t;
    Tensor out = conv1d(t.constant({C, W}, uv), t.constant({C, Cp, Wk}, wv), pad, 1);
    const int wout = W + 2 * pad - Wk + 1;
    REQUIRE(out.shape() == Shape{Cp, wout});
    for (int kp = 0; kp < Cp; ++kp)
      for (int i = 0; i < wout; ++i) {
        double acc = 0.0;
        for (int k = 0; k < C; ++k)
          for (int m = 0; m < Wk; ++m) {
            const int src = i + m - pad;
            if (src >= 0 && src < W) acc += uv[k * W + src] * wv[(k * Cp + kp) * Wk + m];
          }
        CHECK(out.value()[kp * wout + i] == doctest::Approx(acc).epsilon(1e-12));
      }
  }
}

TEST_CASE("conv1d with a unit kernel is the identity") {
  Tape t;
  Tensor u = t.constant({1, 5}, {1, 2, 3, 4, 5});
  Tensor w = t.constant({1, 1, 1}, {1.0});
  Tensor out = conv1d(u, w, 0, 1);
  CHECK(out.value() == u.value());
}

TEST_CASE("group_norm statistics and the single-group oracle") {
  Rng rng(5);
  const int C = 6, W = 8;
  std::vector<double> uv(C * W);
  for (auto& v : uv) v = rng.uniform(-3, 3);
  Tape t;
  Tensor gamma = t.constant({C}, std::vector<double>(C, 1.0));
  Tensor beta = t.constant({C}, std::vector<double>(C, 0.0));

  SUBCASE("pre-affine output has zero mean and unit variance per group") {
    Tensor out = group_norm(t.constant({C, W}, uv), 2, gamma, beta, 1e-5);
    for (int g = 0; g < 2; ++g) {
      double mean = 0, var = 0;
      for (int c = g * 3; c < (g + 1) * 3; ++c)
        for (int i = 0; i < W; ++i) mean += out.value()[c * W + i];
      mean /= 3 * W;
      for (int c = g * 3; c < (g + 1) * 3; ++c)
        for (int i = 0; i < W; ++i) {
          const double d = out.value()[c * W + i] - mean;
          var += d * d;
        }
      var /= 3 * W;
      CHECK(std::abs(mean) < 1e-10);
      CHECK(var == doctest::Approx(1.0).epsilon(1e-4));  // eps shifts variance slightly
    }
  }

  SUBCASE("constant input maps to the bias") {
    Tensor out = group_norm(t.constant({C, W}, std::vector<double>(C * W, 3.7)), 3, gamma, beta,
                            1e-5);
    for (double v : out.value()) CHECK(std::abs(v) < 1e-10);
  }

  SUBCASE("G=1 equals normalization over everything") {
    Tensor out = group_norm(t.constant({C, W}, uv), 1, gamma, beta, 1e-5);
    double mu = 0;
    for (double v : uv) mu += v;
    mu /= C * W;
    double var = 0;
    for (double v : uv) var += (v - mu) * (v - mu);
    var /= C * W;
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    for (int i = 0; i < C * W; ++i)
      CHECK(out.value()[i] == doctest::Approx((uv[i] - mu) * inv).epsilon(1e-12));
  }

  SUBCASE("channel count must divide into groups") {
    CHECK_THROWS_AS(group_norm(t.constant({C, W}, uv), 4, gamma, beta, 1e-5), Error);
  }
}

TEST_CASE("maxpool picks window maxima and routes gradient to the argmax") {
  Param x("x", {1, 4});
  x.value = {1.0, 3.0, 2.0, 0.0};
  Tape t;
  Tensor out = maxpool1d(t.leaf(x), 2, 2);
  CHECK(out.value() == std::vector<double>{3.0, 2.0});
  t.backward(sum(out));
  CHECK(x.grad == std::vector<double>{0.0, 1.0, 1.0, 0.0});
}

TEST_CASE("maxpool halves the width, padding odd tails") {
  Tape t;
  Tensor even = t.constant({2, 10}, std::vector<double>(20, 1.0));
  CHECK(maxpool1d(even, 2, 2).shape() == Shape{2, 5});
  Tensor odd = t.constant({2, 25}, std::vector<double>(50, 1.0));
  CHECK(maxpool1d(odd, 2, 2).shape() == Shape{2, 13});
}

TEST_CASE("maxpool ties break to the first index") {
  Param x("x", {1, 2});
  x.value = {2.0, 2.0};
  Tape t;
  Tensor out = maxpool1d(t.leaf(x), 2, 2);
  t.backward(sum(out));
  CHECK(x.grad == std::vector<double>{1.0, 0.0});
}

TEST_CASE("scale_channels matches the explicit loop") {
  Rng rng(15);
  const int B = 3, C = 4, W = 5;
  std::vector<double> zv(C * W), sv(B * C);
  for (auto& v : zv) v = rng.uniform(-1, 1);
  for (auto& v : sv) v = rng.uniform(-1, 1);
  Tape t;
  Tensor out = scale_channels(t.constant({C, W}, zv), t.constant({B, C}, sv));
  REQUIRE(out.shape() == Shape{B, C, W});
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < W; ++i)
        CHECK(out.value()[(b * C + c) * W + i] ==
              doctest::Approx(zv[c * W + i] * sv[b * C + c]).epsilon(1e-15));
}

TEST_CASE("scale_channels is homogeneous in the scales") {
  Rng rng(16);
  const int B = 2, C = 3, W = 4;
  std::vector<double> zv(C * W), sv(B * C), s2v(B * C);
  for (auto& v : zv) v = rng.uniform(-1, 1);
  for (std::size_t i = 0; i < sv.size(); ++i) {
    sv[i] = rng.uniform(-1, 1);
    s2v[i] = 2.5 * sv[i];
  }
  Tape t;
  Tensor z = t.constant({C, W}, zv);
  Tensor one = scale_channels(z, t.constant({B, C}, sv));
  Tensor two = scale_channels(z, t.constant({B, C}, s2v));
  for (std::size_t i = 0; i < one.value().size(); ++i)
    CHECK(two.value()[i] == doctest::Approx(2.5 * one.value()[i]).epsilon(1e-12));
}

TEST_CASE("finite-difference checks: structured ops") {
  Rng rng(44);
  for (int inst = 0; inst < 20; ++inst) {
    const int B = 1 + static_cast<int>(rng.next_below(2));
    const int C = 2, Cp = 2 + static_cast<int>(rng.next_below(2));
    const int W = 6 + static_cast<int>(rng.next_below(3));
    Param u = make_param("u", {B, C, W}, rng);
    Param w = make_param("w", {C, Cp, 3}, rng);
    Param wt = make_param("wt", {C, Cp, 2}, rng);
    Param gamma = make_param("gamma", {C}, rng, 0.5, 1.5);
    Param beta = make_param("beta", {C}, rng);
    Param scales = make_param("s", {B, C}, rng);
    std::vector<double> mix;

    check_gradients({&u, &w}, [&](Tape& t) {
      Tensor out = conv1d(t.leaf(u), t.leaf(w), 1, 1);
      return mean(mul(out, out));
    });

    check_gradients({&u, &wt}, [&](Tape& t) {
      Tensor out = transpose_conv1d(t.leaf(u), t.leaf(wt), 2);
      return mean(mul(out, out));
    });

    check_gradients({&u, &gamma, &beta}, [&](Tape& t) {
      Tensor out = group_norm(t.leaf(u), 2, t.leaf(gamma), t.leaf(beta), 1e-5);
      return mean(mul(out, out));
    });

    check_gradients({&u, &scales}, [&](Tape& t) {
      Tensor z = slice(t.leaf(u), 0, 0, 1);
      Tensor out = scale_channels(reshape(z, {C, W}), t.leaf(scales));
      return mean(mul(out, out));
    });

    // maxpool: nudge values apart so FD never crosses a tie
    for (std::size_t i = 0; i < u.value.size(); ++i) u.value[i] += 1e-3 * static_cast<double>(i);
    check_gradients({&u}, [&](Tape& t) {
      Tensor out = maxpool1d(t.leaf(u), 2, 2);
      return mean(mul(out, out));
    });
  }
}

TEST_CASE("random composite graph matches finite differences") {
  Rng rng(45);
  for (int inst = 0; inst < 5; ++inst) {
    Param a = make_param("a", {3, 3}, rng, 0.2, 1.0);
    Param b = make_param("b", {3, 3}, rng, 0.2, 1.0);
    check_gradients({&a, &b}, [&](Tape& t) {
      Tensor x = t.leaf(a), y = t.leaf(b);
      Tensor h = tanh(matmul(x, y));
      h = add(h, gelu(matmul(y, x)));
      h = mul(h, exp(scale(x, 0.2)));
      h = div(h, add_const(mul(y, y), 1.0));
      return mean(mul(h, h));
    });
  }
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Param p("p", {3});
  p.value = {1.0, -2.0, 3.0};
  Adam opt({&p});
  p.zero_grad();
  opt.step();
  CHECK(p.value == std::vector<double>{1.0, -2.0, 3.0});
}

TEST_CASE("adam: first bias-corrected step equals -lr") {
  Param p("p", {1});
  p.value = {0.0};
  AdamConfig cfg;
  cfg.lr = 0.1;
  Adam opt({&p}, cfg);
  p.grad = {1.0};
  opt.step();
  CHECK(p.value[0] == doctest::Approx(-0.1).epsilon(1e-7));
}

TEST_CASE("adam: identical seeds give identical trajectories") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    Param p("p", {4});
    for (auto& v : p.value) v = rng.uniform(-1, 1);
    Adam opt({&p});
    for (int step = 0; step < 50; ++step) {
      Tape t;
      Tensor x = t.leaf(p);
      Tensor loss = mean(mul(sub(x, t.constant({4}, {1, 2, 3, 4})), sub(x, t.constant({4}, {1, 2, 3, 4}))));
      t.backward(loss);
      opt.step();
    }
    return p.value;
  };
  CHECK(run(7) == run(7));
  CHECK(run(7) != run(8));
}
