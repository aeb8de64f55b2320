#pragma once

// 1D U-Net neural operator conditioned on the left pressure: a sine MLP maps
// normalized p_l to feature vectors that modulate the encoder latents of a
// fixed reference stack per channel; the decoder projects the conditioned
// latents back to (rho, u, p) profiles.

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "deeponet.hpp"  // shares the input Normalization convention
#include "metrics.hpp"
#include "riemann.hpp"
#include "tensor.hpp"

namespace ron::unet {

using deeponet::Normalization;

struct UNetSpec {
  std::vector<int> channels = {32, 64, 128, 256};  // encoder levels 1..4
  int groups = 8;
  int kernel = 3;  // conv_block kernel, zero "same" padding
  int n_ref = 16;
  int cond_features = 128;
  bool rho_only = false;  // reference stack and outputs restricted to density
};

struct ConvBlock {
  ad::Param w;      // [C_in, C_out, kernel]
  ad::Param gamma;  // [C_out]
  ad::Param beta;   // [C_out]
};

struct Model {
  UNetSpec spec;
  Normalization norm;
  std::vector<double> grid_x;
  std::string case_label;
  std::uint64_t seed = 0;
  std::int64_t steps_taken = 0;

  std::vector<int> ref_indices;   // train-split samples in the stack
  std::vector<double> ref_stack;  // [C_in, W]
  int ref_channels = 0;
  int n_fields = 3;  // 1 when rho_only

  // conditioner f(p) = w2 sin(w1 sin(w0 p + b0) + b1) + b2
  ad::Param mlp_w0, mlp_b0, mlp_w1, mlp_b1, mlp_w2, mlp_b2;
  std::vector<ad::Param> proj;  // per level [cond_features, C_p]

  std::vector<ConvBlock> enc;  // 4 levels
  ConvBlock dec4;              // bottom conv_block before the first upsample
  ad::Param up4;               // [C4, C3, 2]
  ConvBlock dec3;
  ad::Param up3;  // [C3, C2, 2]
  ConvBlock dec2;
  ad::Param up2;  // [C2, C1, 2]
  ConvBlock head_block;
  ad::Param head_w;      // [C1, n_fields, kernel]
  ad::Param head_gamma;  // [n_fields]
  ad::Param head_beta;   // [n_fields]

  std::vector<ad::Param*> params();
  std::vector<const ad::Param*> params() const;

  ad::Tensor condition_features(ad::Tape& tape, const ad::Tensor& pl_norm) const;  // [B,F]
  std::vector<ad::Tensor> encode(ad::Tape& tape) const;                            // z1..z4
  // full forward for a batch of normalized pressures: [B, n_fields, W]
  ad::Tensor forward(ad::Tape& tape, const std::vector<double>& pl_norm) const;

  // physical-space fields, flat [n, N_p, n_fields]
  std::vector<double> infer(const std::vector<double>& p_l_values) const;
  metrics::ErrorReport evaluate(const riemann::Dataset& ds, const std::vector<int>& indices) const;
  // density-only error for the single-field variant, percent
  double evaluate_rho(const riemann::Dataset& ds, const std::vector<int>& indices) const;

  // raw encoder latents (values only), for the latent SVD analysis
  std::vector<std::vector<double>> latents() const;
  std::vector<ad::Shape> latent_shapes() const;
};

struct TrainOptions {
  UNetSpec spec;
  int steps = 2000;
  int batch = 32;
  double lr = 5e-4;  // cosine decay to zero over the budget
  double clamp_eps = 1e-10;
  bool log_fields = false;
  std::uint64_t seed = 0;
  std::function<void(int step, double loss)> on_step;
};

struct TrainResult {
  Model model;
  double first_loss = 0.0;
  double final_loss = 0.0;
  double min_clamped = std::numeric_limits<double>::infinity();
  double wall_seconds = 0.0;
};

TrainResult train_unet(const riemann::Dataset& ds, const TrainOptions& opts);

void save_model(const Model& m, const std::string& path,
                const nlohmann::ordered_json& provenance = {});
Model load_model(const std::string& path);

struct EnsembleResult {
  std::vector<TrainResult> members;
  std::vector<metrics::ErrorReport> reports;
  metrics::EnsembleStats stats;
  int best_member = 0;
};

EnsembleResult train_ensemble(const riemann::Dataset& ds, const TrainOptions& opts, int n_members);

}  // namespace ron::unet
