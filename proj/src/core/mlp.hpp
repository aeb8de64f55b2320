#pragma once

// Fully connected network with tanh or adaptive (Rowdy) activations.
// Rowdy: g(x) = h(10*a*x + c) + 10*a1*sin(10*F1*x + c1) with h = tanh or cos
// and five trainable scalars per hidden layer.

#include <string>
#include <vector>

#include "tensor.hpp"

namespace ron::nn {

enum class Activation { Tanh, RowdyTanh, RowdyCos };

std::string activation_to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct RowdySite {
  ad::Param a, c, a1, f1, c1;
};

struct MLPConfig {
  int input_dim = 1;
  std::vector<int> widths;  // hidden widths then output width
  Activation activation = Activation::Tanh;
};

class MLP {
 public:
  MLP() = default;
  MLP(const MLPConfig& cfg, Rng& rng, const std::string& name_prefix);

  // x: [N, input_dim] -> [N, output_dim]
  ad::Tensor forward(ad::Tape& tape, const ad::Tensor& x) const;

  // outputs of every hidden layer plus the final linear layer, for
  // layer-wise spectrum analysis
  std::vector<ad::Tensor> forward_collect(ad::Tape& tape, const ad::Tensor& x) const;

  std::vector<ad::Param*> params();
  const MLPConfig& config() const { return cfg_; }
  int output_dim() const { return cfg_.widths.back(); }

  // weights first (layer order), then biases, then rowdy scalars: the
  // declaration order used by checkpoints
  std::vector<ad::Param> weights_w;
  std::vector<ad::Param> weights_b;
  std::vector<RowdySite> rowdy;

 private:
  ad::Tensor activate(ad::Tape& tape, const ad::Tensor& z, int layer) const;
  MLPConfig cfg_;
};

// Glorot-uniform initialization for a [fan_in, fan_out] weight.
void glorot_init(ad::Param& w, Rng& rng);

}  // namespace ron::nn
