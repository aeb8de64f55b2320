#include "unet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

#include "checkpoint.hpp"

namespace ron::unet {

using ad::Param;
using ad::Tape;
using ad::Tensor;

namespace {

ConvBlock make_conv_block(const std::string& name, int c_in, int c_out, int kernel, Rng& rng) {
  ConvBlock b;
  b.w = Param(name + ".w", {c_in, c_out, kernel});
  const double limit = std::sqrt(6.0 / (c_in * kernel + c_out * kernel));
  for (auto& v : b.w.value) v = rng.uniform(-limit, limit);
  b.gamma = Param(name + ".gamma", {c_out});
  std::fill(b.gamma.value.begin(), b.gamma.value.end(), 1.0);
  b.beta = Param(name + ".beta", {c_out});
  return b;
}

Param make_dense(const std::string& name, int rows, int cols, Rng& rng) {
  Param p(name, {rows, cols});
  const double limit = std::sqrt(6.0 / (rows + cols));
  for (auto& v : p.value) v = rng.uniform(-limit, limit);
  return p;
}

Param make_tconv(const std::string& name, int c_in, int c_out, Rng& rng) {
  Param p(name, {c_in, c_out, 2});
  const double limit = std::sqrt(6.0 / (2 * c_in + 2 * c_out));
  for (auto& v : p.value) v = rng.uniform(-limit, limit);
  return p;
}

// conv + group norm + gelu, zero "same" padding
Tensor conv_block(Tape& tape, const Tensor& u, const ConvBlock& b, int groups, int kernel) {
  Tensor c = ad::conv1d(u, tape.leaf(const_cast<Param&>(b.w)), kernel / 2, 1);
  Tensor g = ad::group_norm(c, groups, tape.leaf(const_cast<Param&>(b.gamma)),
                            tape.leaf(const_cast<Param&>(b.beta)), 1e-5);
  return ad::gelu(g);
}

// crop the upsampled tensor on the right to the skip width when the halving
// chain produced an odd width
Tensor crop_to(const Tensor& t, int width) {
  const ad::Shape& s = t.shape();
  const int axis = static_cast<int>(s.size()) - 1;
  if (s[axis] == width) return t;
  if (s[axis] < width) fail_config("decoder width underflow");
  return ad::slice(t, axis, 0, width);
}

}  // namespace

std::vector<ad::Param*> Model::params() {
  std::vector<Param*> ps = {&mlp_w0, &mlp_b0, &mlp_w1, &mlp_b1, &mlp_w2, &mlp_b2};
  for (auto& p : proj) ps.push_back(&p);
  auto block = [&](ConvBlock& b) {
    ps.push_back(&b.w);
    ps.push_back(&b.gamma);
    ps.push_back(&b.beta);
  };
  for (auto& b : enc) block(b);
  block(dec4);
  ps.push_back(&up4);
  block(dec3);
  ps.push_back(&up3);
  block(dec2);
  ps.push_back(&up2);
  block(head_block);
  ps.push_back(&head_w);
  ps.push_back(&head_gamma);
  ps.push_back(&head_beta);
  return ps;
}

std::vector<const ad::Param*> Model::params() const {
  auto mut = const_cast<Model*>(this)->params();
  return {mut.begin(), mut.end()};
}

Tensor Model::condition_features(Tape& tape, const Tensor& pl_norm) const {
  using namespace ad;
  Tensor h = add(matmul(pl_norm, tape.leaf(const_cast<Param&>(mlp_w0))),
                 tape.leaf(const_cast<Param&>(mlp_b0)));
  h = ad::sin(h);
  h = add(matmul(h, tape.leaf(const_cast<Param&>(mlp_w1))), tape.leaf(const_cast<Param&>(mlp_b1)));
  h = ad::sin(h);
  return add(matmul(h, tape.leaf(const_cast<Param&>(mlp_w2))),
             tape.leaf(const_cast<Param&>(mlp_b2)));
}

std::vector<Tensor> Model::encode(Tape& tape) const {
  std::vector<Tensor> z;
  Tensor h = tape.constant({ref_channels, static_cast<int>(grid_x.size())}, ref_stack);
  for (std::size_t p = 0; p < enc.size(); ++p) {
    if (p > 0) h = ad::maxpool1d(h, 2, 2);
    h = conv_block(tape, h, enc[p], spec.groups, spec.kernel);
    z.push_back(h);
  }
  return z;
}

Tensor Model::forward(Tape& tape, const std::vector<double>& pl_norm) const {
  using namespace ad;
  const int batch = static_cast<int>(pl_norm.size());
  Tensor pl = tape.constant({batch, 1}, pl_norm);
  Tensor features = condition_features(tape, pl);  // [B, F]

  std::vector<Tensor> z = encode(tape);
  std::vector<Tensor> z_cond;
  for (int p = 0; p < 4; ++p) {
    Tensor scales = matmul(features, tape.leaf(const_cast<Param&>(proj[p])));  // [B, C_p]
    z_cond.push_back(scale_channels(z[p], scales));
  }

  Tensor d3 = transpose_conv1d(conv_block(tape, z_cond[3], dec4, spec.groups, spec.kernel),
                               tape.leaf(const_cast<Param&>(up4)), 2);
  d3 = crop_to(d3, z[2].shape()[1]);
  Tensor d2 = transpose_conv1d(
      conv_block(tape, concat({z_cond[2], d3}, 1), dec3, spec.groups, spec.kernel),
      tape.leaf(const_cast<Param&>(up3)), 2);
  d2 = crop_to(d2, z[1].shape()[1]);
  Tensor d1 = transpose_conv1d(
      conv_block(tape, concat({z_cond[1], d2}, 1), dec2, spec.groups, spec.kernel),
      tape.leaf(const_cast<Param&>(up2)), 2);
  d1 = crop_to(d1, z[0].shape()[1]);

  Tensor merged = conv_block(tape, concat({z_cond[0], d1}, 1), head_block, spec.groups,
                             spec.kernel);
  Tensor projected = conv1d(merged, tape.leaf(const_cast<Param&>(head_w)), spec.kernel / 2, 1);
  // single-group head norm: per-channel stats would pin each profile's mean
  // and variance across samples
  return group_norm(projected, 1, tape.leaf(const_cast<Param&>(head_gamma)),
                    tape.leaf(const_cast<Param&>(head_beta)), 1e-5);
}

std::vector<double> Model::infer(const std::vector<double>& p_l_values) const {
  const int n = static_cast<int>(p_l_values.size());
  const int n_p = static_cast<int>(grid_x.size());
  std::vector<double> pl_norm(n);
  for (int i = 0; i < n; ++i) pl_norm[i] = norm.norm_p(p_l_values[i]);
  Tape tape;
  Tensor out = forward(tape, pl_norm);  // [n, V, W]
  const auto& ov = out.value();
  std::vector<double> fields(static_cast<std::size_t>(n) * n_p * n_fields);
  for (int r = 0; r < n; ++r)
    for (int v = 0; v < n_fields; ++v)
      for (int j = 0; j < n_p; ++j)
        fields[(static_cast<std::size_t>(r) * n_p + j) * n_fields + v] =
            ov[(static_cast<std::size_t>(r) * n_fields + v) * n_p + j];
  if (norm.log_fields) {
    for (int r = 0; r < n; ++r)
      for (int j = 0; j < n_p; ++j) {
        double* out_rj = fields.data() + (static_cast<std::size_t>(r) * n_p + j) * n_fields;
        out_rj[0] = std::max(std::exp(out_rj[0]), 1e-10);
        if (n_fields == 3) out_rj[2] = std::max(std::exp(out_rj[2]), 1e-10);
      }
  }
  return fields;
}

metrics::ErrorReport Model::evaluate(const riemann::Dataset& ds,
                                     const std::vector<int>& indices) const {
  if (n_fields != 3) fail_config("evaluate: model was trained on the density field only");
  const int n = static_cast<int>(indices.size());
  const int n_p = ds.n_points();
  std::vector<double> p_l(n);
  for (int i = 0; i < n; ++i) p_l[i] = ds.trajectories[indices[i]].p_l;
  std::vector<double> pred = infer(p_l);
  std::vector<double> exact(static_cast<std::size_t>(n) * n_p * 3);
  for (int i = 0; i < n; ++i) {
    const auto& t = ds.trajectories[indices[i]];
    for (int j = 0; j < n_p; ++j) {
      exact[(static_cast<std::size_t>(i) * n_p + j) * 3 + 0] =
          ds.log_transformed ? std::exp(t.rho[j]) : t.rho[j];
      exact[(static_cast<std::size_t>(i) * n_p + j) * 3 + 1] = t.u[j];
      exact[(static_cast<std::size_t>(i) * n_p + j) * 3 + 2] =
          ds.log_transformed ? std::exp(t.p[j]) : t.p[j];
    }
  }
  return metrics::relative_l2(pred, exact, n, n_p);
}

double Model::evaluate_rho(const riemann::Dataset& ds, const std::vector<int>& indices) const {
  const int n = static_cast<int>(indices.size());
  const int n_p = ds.n_points();
  std::vector<double> p_l(n);
  for (int i = 0; i < n; ++i) p_l[i] = ds.trajectories[indices[i]].p_l;
  std::vector<double> pred = infer(p_l);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto& t = ds.trajectories[indices[i]];
    double num = 0.0, den = 0.0;
    for (int j = 0; j < n_p; ++j) {
      const double exact = ds.log_transformed ? std::exp(t.rho[j]) : t.rho[j];
      const double d = pred[(static_cast<std::size_t>(i) * n_p + j) * n_fields] - exact;
      num += d * d;
      den += exact * exact;
    }
    acc += 100.0 * std::sqrt(num / den);
  }
  return acc / n;
}

std::vector<std::vector<double>> Model::latents() const {
  Tape tape;
  std::vector<Tensor> z = encode(tape);
  std::vector<std::vector<double>> out;
  for (const Tensor& t : z) out.push_back(t.value());
  return out;
}

std::vector<ad::Shape> Model::latent_shapes() const {
  Tape tape;
  std::vector<Tensor> z = encode(tape);
  std::vector<ad::Shape> out;
  for (const Tensor& t : z) out.push_back(t.shape());
  return out;
}

// ---- training -----------------------------------------------------------------

namespace {

Model build_model(const riemann::Dataset& ds, const TrainOptions& opts, bool log_fields) {
  if (ds.n_points() < 8) fail_config("train_unet: need at least 8 grid points for 4 levels");
  Model m;
  m.spec = opts.spec;
  m.norm = Normalization::for_dataset(ds, log_fields);
  m.grid_x = ds.trajectories.at(0).x;
  m.case_label = ds.case_label;
  m.seed = opts.seed;
  m.n_fields = opts.spec.rho_only ? 1 : 3;

  // reference stack: n_ref trajectories equispaced over the train split in
  // p_l order, fields stacked as channels
  const int n_tr = static_cast<int>(ds.train_indices.size());
  if (opts.spec.n_ref < 1 || opts.spec.n_ref > n_tr)
    fail_config("train_unet: n_ref must be in [1, train size]");
  std::vector<int> order = ds.train_indices;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return ds.trajectories[a].p_l < ds.trajectories[b].p_l;
  });
  for (int i = 0; i < opts.spec.n_ref; ++i) {
    const int pos = opts.spec.n_ref == 1
                        ? 0
                        : static_cast<int>(static_cast<std::int64_t>(i) * (n_tr - 1) /
                                           (opts.spec.n_ref - 1));
    m.ref_indices.push_back(order[pos]);
  }
  const int n_p = ds.n_points();
  m.ref_channels = opts.spec.n_ref * m.n_fields;
  m.ref_stack.resize(static_cast<std::size_t>(m.ref_channels) * n_p);
  const bool take_log = log_fields && !ds.log_transformed;
  for (int i = 0; i < opts.spec.n_ref; ++i) {
    const auto& t = ds.trajectories[m.ref_indices[i]];
    for (int v = 0; v < m.n_fields; ++v) {
      double* row = m.ref_stack.data() + (static_cast<std::size_t>(i) * m.n_fields + v) * n_p;
      for (int j = 0; j < n_p; ++j) {
        const double raw = v == 0 ? t.rho[j] : (v == 1 ? t.u[j] : t.p[j]);
        row[j] = (take_log && v != 1) ? std::log(raw) : raw;
      }
    }
  }

  const auto& ch = opts.spec.channels;
  if (ch.size() != 4) fail_config("train_unet: expected 4 channel counts");
  for (int c : ch)
    if (c % opts.spec.groups != 0)
      fail_config("train_unet: channels must be divisible by groups");

  Rng rng(Rng::derive(opts.seed, 11));
  m.mlp_w0 = make_dense("cond.w0", 1, 128, rng);
  m.mlp_b0 = Param("cond.b0", {128});
  m.mlp_w1 = make_dense("cond.w1", 128, 128, rng);
  m.mlp_b1 = Param("cond.b1", {128});
  m.mlp_w2 = make_dense("cond.w2", 128, opts.spec.cond_features, rng);
  m.mlp_b2 = Param("cond.b2", {opts.spec.cond_features});
  for (int p = 0; p < 4; ++p)
    m.proj.push_back(make_dense("proj" + std::to_string(p), opts.spec.cond_features, ch[p], rng));

  int c_in = m.ref_channels;
  for (int p = 0; p < 4; ++p) {
    m.enc.push_back(make_conv_block("enc" + std::to_string(p), c_in, ch[p], opts.spec.kernel, rng));
    c_in = ch[p];
  }
  m.dec4 = make_conv_block("dec4", ch[3], ch[3], opts.spec.kernel, rng);
  m.up4 = make_tconv("up4", ch[3], ch[2], rng);
  m.dec3 = make_conv_block("dec3", 2 * ch[2], ch[2], opts.spec.kernel, rng);
  m.up3 = make_tconv("up3", ch[2], ch[1], rng);
  m.dec2 = make_conv_block("dec2", 2 * ch[1], ch[1], opts.spec.kernel, rng);
  m.up2 = make_tconv("up2", ch[1], ch[0], rng);
  m.head_block = make_conv_block("head_block", 2 * ch[0], ch[0], opts.spec.kernel, rng);
  m.head_w = Param("head_out.w", {ch[0], m.n_fields, opts.spec.kernel});
  {
    const double limit = std::sqrt(6.0 / (ch[0] * opts.spec.kernel + m.n_fields * opts.spec.kernel));
    for (auto& v : m.head_w.value) v = rng.uniform(-limit, limit);
  }
  m.head_gamma = Param("head_out.gamma", {m.n_fields});
  std::fill(m.head_gamma.value.begin(), m.head_gamma.value.end(), 1.0);
  m.head_beta = Param("head_out.beta", {m.n_fields});
  return m;
}

}  // namespace

TrainResult train_unet(const riemann::Dataset& ds, const TrainOptions& opts) {
  const auto t_start = std::chrono::steady_clock::now();
  const bool log_fields = opts.log_fields || ds.log_transformed;
  TrainResult result;
  result.model = build_model(ds, opts, log_fields);
  Model& m = result.model;

  const int n_tr = static_cast<int>(ds.train_indices.size());
  const int n_p = ds.n_points();
  const int n_f = m.n_fields;
  const bool take_log = log_fields && !ds.log_transformed;

  // targets [n_tr, V, W] and normalized inputs
  std::vector<double> targets(static_cast<std::size_t>(n_tr) * n_f * n_p);
  std::vector<double> pl_norm(n_tr);
  for (int s = 0; s < n_tr; ++s) {
    const auto& t = ds.trajectories[ds.train_indices[s]];
    pl_norm[s] = m.norm.norm_p(t.p_l);
    for (int v = 0; v < n_f; ++v) {
      double* row = targets.data() + (static_cast<std::size_t>(s) * n_f + v) * n_p;
      for (int j = 0; j < n_p; ++j) {
        const double raw = v == 0 ? t.rho[j] : (v == 1 ? t.u[j] : t.p[j]);
        row[j] = (take_log && v != 1) ? std::log(raw) : raw;
      }
    }
  }

  const int batch = std::min(opts.batch, n_tr);
  std::vector<int> order(n_tr);
  std::iota(order.begin(), order.end(), 0);
  Rng batch_rng(Rng::derive(opts.seed, 13));

  ad::AdamConfig acfg;
  acfg.lr = opts.lr;
  ad::Adam adam(m.params(), acfg);

  int cursor = n_tr;  // forces an initial shuffle
  for (int step = 0; step < opts.steps; ++step) {
    if (cursor + batch > n_tr) {
      shuffle(order, batch_rng);
      cursor = 0;
    }
    std::vector<double> pl_batch(batch);
    std::vector<double> target_batch(static_cast<std::size_t>(batch) * n_f * n_p);
    for (int b = 0; b < batch; ++b) {
      const int s = order[cursor + b];
      pl_batch[b] = pl_norm[s];
      std::copy_n(targets.data() + static_cast<std::size_t>(s) * n_f * n_p,
                  static_cast<std::size_t>(n_f) * n_p,
                  target_batch.data() + static_cast<std::size_t>(b) * n_f * n_p);
    }
    cursor += batch;

    Tape tape;
    Tensor pred = m.forward(tape, pl_batch);  // [B, V, W]
    if (!log_fields) {
      // clamp the rho (and p) channels before the loss
      Tensor rho = ad::clamp_min(ad::slice(pred, 1, 0, 1), opts.clamp_eps);
      for (double v : rho.value()) result.min_clamped = std::min(result.min_clamped, v);
      if (n_f == 3) {
        Tensor vel = ad::slice(pred, 1, 1, 2);
        Tensor prs = ad::clamp_min(ad::slice(pred, 1, 2, 3), opts.clamp_eps);
        for (double v : prs.value()) result.min_clamped = std::min(result.min_clamped, v);
        pred = ad::concat({rho, vel, prs}, 1);
      } else {
        pred = rho;
      }
    }
    Tensor diff = ad::sub(pred, tape.constant({batch, n_f, n_p}, target_batch));
    Tensor loss = ad::mean(ad::mul(diff, diff));
    const double lv = loss.value()[0];
    if (!std::isfinite(lv))
      fail_numeric("train_unet: non-finite loss at step " + std::to_string(step));
    if (step == 0) result.first_loss = lv;
    result.final_loss = lv;
    if (opts.on_step) opts.on_step(step, lv);
    tape.backward(loss);
    adam.set_lr(opts.lr * 0.5 *
                (1.0 + std::cos(std::numbers::pi * step / std::max(1, opts.steps))));
    adam.step();
  }
  m.steps_taken = opts.steps;
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

// ---- checkpoints ----------------------------------------------------------------

void save_model(const Model& m, const std::string& path, const nlohmann::ordered_json& provenance) {
  io::Json header;
  header["format"] = "RONW";
  header["kind"] = "unet";
  header["spec"] = {{"channels", m.spec.channels}, {"groups", m.spec.groups},
                    {"kernel", m.spec.kernel},     {"n_ref", m.spec.n_ref},
                    {"cond_features", m.spec.cond_features}, {"rho_only", m.spec.rho_only}};
  header["normalization"] = {{"p_lo", m.norm.p_lo},       {"p_hi", m.norm.p_hi},
                             {"log10_p", m.norm.log10_p}, {"x_lo", m.norm.x_lo},
                             {"x_hi", m.norm.x_hi},       {"log_fields", m.norm.log_fields}};
  header["case_label"] = m.case_label;
  header["seed"] = m.seed;
  header["steps"] = m.steps_taken;
  header["n_fields"] = m.n_fields;
  header["ref_indices"] = m.ref_indices;
  if (!provenance.empty()) header["provenance"] = provenance;

  std::vector<io::Blob> blobs;
  blobs.push_back({"grid_x", {static_cast<int>(m.grid_x.size())}, m.grid_x});
  blobs.push_back({"ref_stack", {m.ref_channels, static_cast<int>(m.grid_x.size())}, m.ref_stack});
  for (const Param* p : m.params()) blobs.push_back({p->name, p->shape, p->value});
  io::save_checkpoint(path, std::move(header), blobs);
}

Model load_model(const std::string& path) {
  io::Checkpoint ck = io::load_checkpoint(path);
  if (ck.header.at("kind").get<std::string>() != "unet")
    fail_config("load_model: checkpoint does not hold a unet model");
  TrainOptions opts;
  opts.spec.channels = ck.header.at("spec").at("channels").get<std::vector<int>>();
  opts.spec.groups = ck.header.at("spec").at("groups").get<int>();
  opts.spec.kernel = ck.header.at("spec").at("kernel").get<int>();
  opts.spec.n_ref = ck.header.at("spec").at("n_ref").get<int>();
  opts.spec.cond_features = ck.header.at("spec").at("cond_features").get<int>();
  opts.spec.rho_only = ck.header.at("spec").at("rho_only").get<bool>();
  opts.seed = ck.header.at("seed").get<std::uint64_t>();

  Model m;
  m.spec = opts.spec;
  m.norm.p_lo = ck.header.at("normalization").at("p_lo").get<double>();
  m.norm.p_hi = ck.header.at("normalization").at("p_hi").get<double>();
  m.norm.log10_p = ck.header.at("normalization").at("log10_p").get<bool>();
  m.norm.x_lo = ck.header.at("normalization").at("x_lo").get<double>();
  m.norm.x_hi = ck.header.at("normalization").at("x_hi").get<double>();
  m.norm.log_fields = ck.header.at("normalization").at("log_fields").get<bool>();
  m.case_label = ck.header.value("case_label", "");
  m.seed = opts.seed;
  m.steps_taken = ck.header.at("steps").get<std::int64_t>();
  m.n_fields = ck.header.at("n_fields").get<int>();
  m.ref_indices = ck.header.at("ref_indices").get<std::vector<int>>();
  m.grid_x = ck.find("grid_x").data;
  m.ref_stack = ck.find("ref_stack").data;
  m.ref_channels = ck.find("ref_stack").shape.at(0);

  // rebuild parameter skeleton with the right shapes, then load values
  const auto& ch = m.spec.channels;
  Rng rng(0);
  m.mlp_w0 = make_dense("cond.w0", 1, 128, rng);
  m.mlp_b0 = Param("cond.b0", {128});
  m.mlp_w1 = make_dense("cond.w1", 128, 128, rng);
  m.mlp_b1 = Param("cond.b1", {128});
  m.mlp_w2 = make_dense("cond.w2", 128, m.spec.cond_features, rng);
  m.mlp_b2 = Param("cond.b2", {m.spec.cond_features});
  for (int p = 0; p < 4; ++p)
    m.proj.push_back(make_dense("proj" + std::to_string(p), m.spec.cond_features, ch[p], rng));
  int c_in = m.ref_channels;
  for (int p = 0; p < 4; ++p) {
    m.enc.push_back(make_conv_block("enc" + std::to_string(p), c_in, ch[p], m.spec.kernel, rng));
    c_in = ch[p];
  }
  m.dec4 = make_conv_block("dec4", ch[3], ch[3], m.spec.kernel, rng);
  m.up4 = make_tconv("up4", ch[3], ch[2], rng);
  m.dec3 = make_conv_block("dec3", 2 * ch[2], ch[2], m.spec.kernel, rng);
  m.up3 = make_tconv("up3", ch[2], ch[1], rng);
  m.dec2 = make_conv_block("dec2", 2 * ch[1], ch[1], m.spec.kernel, rng);
  m.up2 = make_tconv("up2", ch[1], ch[0], rng);
  m.head_block = make_conv_block("head_block", 2 * ch[0], ch[0], m.spec.kernel, rng);
  m.head_w = Param("head_out.w", {ch[0], m.n_fields, m.spec.kernel});
  m.head_gamma = Param("head_out.gamma", {m.n_fields});
  m.head_beta = Param("head_out.beta", {m.n_fields});

  for (Param* p : m.params()) {
    const io::Blob& b = ck.find(p->name);
    if (b.shape != p->shape) fail_io("checkpoint blob shape mismatch for " + p->name);
    p->value = b.data;
  }
  return m;
}

EnsembleResult train_ensemble(const riemann::Dataset& ds, const TrainOptions& opts,
                              int n_members) {
  if (n_members < 1) fail_config("train_ensemble: need at least one member");
  EnsembleResult out;
  out.members.resize(n_members);
  out.reports.resize(n_members);
  parallel_for(n_members, [&](int i) {
    TrainOptions o = opts;
    o.seed = opts.seed + static_cast<std::uint64_t>(i);
    out.members[i] = train_unet(ds, o);
    out.reports[i] = out.members[i].model.evaluate(ds, ds.test_indices);
    out.reports[i].wall_seconds = out.members[i].wall_seconds;
  });
  if (n_members >= 2) out.stats = metrics::ensemble_stats(out.reports);
  out.best_member = 0;
  for (int i = 1; i < n_members; ++i)
    if (out.reports[i].total_pct < out.reports[out.best_member].total_pct) out.best_member = i;
  return out;
}

}  // namespace ron::unet
