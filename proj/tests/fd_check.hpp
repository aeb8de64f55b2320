#pragma once

// Central finite-difference gradient oracle shared by the test suites.
// The loss builder must be a deterministic scalar function of the params.

#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "tensor.hpp"

namespace ron_test {

inline void check_gradients(const std::vector<ron::ad::Param*>& params,
                            const std::function<ron::ad::Tensor(ron::ad::Tape&)>& build_loss,
                            double h = 1e-6, double tol = 1e-5) {
  using ron::ad::Tape;
  Tape tape;
  ron::ad::Tensor loss = build_loss(tape);
  const double base = loss.value()[0];
  CHECK(std::isfinite(base));
  for (ron::ad::Param* p : params) p->zero_grad();
  tape.backward(loss);

  for (ron::ad::Param* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double keep = p->value[i];
      p->value[i] = keep + h;
      Tape tp;
      const double up = build_loss(tp).value()[0];
      p->value[i] = keep - h;
      Tape tm;
      const double dn = build_loss(tm).value()[0];
      p->value[i] = keep;
      const double fd = (up - dn) / (2 * h);
      const double ad = p->grad[i];
      const double denom = std::max({1.0, std::abs(fd), std::abs(ad)});
      INFO("param ", p->name, " index ", i, " ad=", ad, " fd=", fd);
      CHECK(std::abs(ad - fd) / denom < tol);
    }
  }
}

inline ron::ad::Param make_param(const std::string& name, ron::ad::Shape shape, ron::Rng& rng,
                                 double lo = -1.0, double hi = 1.0) {
  ron::ad::Param p(name, std::move(shape));
  for (auto& v : p.value) v = rng.uniform(lo, hi);
  return p;
}

}  // namespace ron_test
