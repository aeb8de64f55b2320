#include "mlp.hpp"

#include <cmath>

namespace ron::nn {

std::string activation_to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::RowdyTanh: return "rowdy-tanh";
    case Activation::RowdyCos: return "rowdy-cos";
  }
  return "tanh";
}

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "rowdy-tanh") return Activation::RowdyTanh;
  if (s == "rowdy-cos") return Activation::RowdyCos;
  fail_config("unknown activation: " + s + " (expected tanh|rowdy-tanh|rowdy-cos)");
}

void glorot_init(ad::Param& w, Rng& rng) {
  if (w.shape.size() != 2) fail_config("glorot_init expects a rank-2 weight");
  const double limit = std::sqrt(6.0 / (w.shape[0] + w.shape[1]));
  for (auto& x : w.value) x = rng.uniform(-limit, limit);
}

MLP::MLP(const MLPConfig& cfg, Rng& rng, const std::string& name_prefix) : cfg_(cfg) {
  if (cfg.widths.empty()) fail_config("MLP needs at least one layer width");
  int fan_in = cfg.input_dim;
  for (std::size_t l = 0; l < cfg.widths.size(); ++l) {
    const int fan_out = cfg.widths[l];
    ad::Param w(name_prefix + ".w" + std::to_string(l), {fan_in, fan_out});
    glorot_init(w, rng);
    weights_w.push_back(std::move(w));
    weights_b.emplace_back(name_prefix + ".b" + std::to_string(l), ad::Shape{fan_out});
    fan_in = fan_out;
  }
  if (cfg.activation != Activation::Tanh) {
    const int hidden = static_cast<int>(cfg.widths.size()) - 1;
    for (int l = 0; l < hidden; ++l) {
      RowdySite site;
      const std::string p = name_prefix + ".rowdy" + std::to_string(l) + ".";
      site.a = ad::Param(p + "a", {1});
      site.c = ad::Param(p + "c", {1});
      site.a1 = ad::Param(p + "a1", {1});
      site.f1 = ad::Param(p + "f1", {1});
      site.c1 = ad::Param(p + "c1", {1});
      site.a.value[0] = 0.1;
      site.c.value[0] = 0.1;
      site.a1.value[0] = 0.0;
      site.f1.value[0] = 0.1;
      site.c1.value[0] = 0.0;
      rowdy.push_back(std::move(site));
    }
  }
}

ad::Tensor MLP::activate(ad::Tape& tape, const ad::Tensor& z, int layer) const {
  using namespace ad;
  if (cfg_.activation == Activation::Tanh) return tanh(z);
  const RowdySite& s = rowdy[layer];
  Tensor a = tape.leaf(const_cast<Param&>(s.a));
  Tensor c = tape.leaf(const_cast<Param&>(s.c));
  Tensor a1 = tape.leaf(const_cast<Param&>(s.a1));
  Tensor f1 = tape.leaf(const_cast<Param&>(s.f1));
  Tensor c1 = tape.leaf(const_cast<Param&>(s.c1));
  Tensor base_arg = add(mul(z, scale(a, 10.0)), c);
  Tensor base = cfg_.activation == Activation::RowdyCos ? cos(base_arg) : tanh(base_arg);
  Tensor osc = mul(sin(add(mul(z, scale(f1, 10.0)), c1)), scale(a1, 10.0));
  return add(base, osc);
}

ad::Tensor MLP::forward(ad::Tape& tape, const ad::Tensor& x) const {
  using namespace ad;
  Tensor h = x;
  const int n_layers = static_cast<int>(cfg_.widths.size());
  for (int l = 0; l < n_layers; ++l) {
    Tensor w = tape.leaf(const_cast<Param&>(weights_w[l]));
    Tensor b = tape.leaf(const_cast<Param&>(weights_b[l]));
    Tensor z = add(matmul(h, w), b);
    h = (l + 1 < n_layers) ? activate(tape, z, l) : z;
  }
  return h;
}

std::vector<ad::Tensor> MLP::forward_collect(ad::Tape& tape, const ad::Tensor& x) const {
  using namespace ad;
  std::vector<Tensor> outs;
  Tensor h = x;
  const int n_layers = static_cast<int>(cfg_.widths.size());
  for (int l = 0; l < n_layers; ++l) {
    Tensor w = tape.leaf(const_cast<Param&>(weights_w[l]));
    Tensor b = tape.leaf(const_cast<Param&>(weights_b[l]));
    Tensor z = add(matmul(h, w), b);
    h = (l + 1 < n_layers) ? activate(tape, z, l) : z;
    outs.push_back(h);
  }
  return outs;
}

std::vector<ad::Param*> MLP::params() {
  std::vector<ad::Param*> ps;
  for (auto& w : weights_w) ps.push_back(&w);
  for (auto& b : weights_b) ps.push_back(&b);
  for (auto& s : rowdy) {
    ps.push_back(&s.a);
    ps.push_back(&s.c);
    ps.push_back(&s.a1);
    ps.push_back(&s.f1);
    ps.push_back(&s.c1);
  }
  return ps;
}

}  // namespace ron::nn
