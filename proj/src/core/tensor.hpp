#pragma once

// Dense float64 tensors with reverse-mode automatic differentiation on a
// per-run tape, plus the Adam optimizer. The primitive set is closed over
// everything the operator networks need: matmul, elementwise math, reductions,
// reshaping, 1D convolution / group norm / pooling / transpose convolution,
// and FiLM-style channel scaling.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "common.hpp"

namespace ron::ad {

using Shape = std::vector<int>;

std::int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

// Persistent trainable parameter; tapes bind leaves to these and backward
// accumulates into grad.
struct Param {
  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;

  Param() = default;
  Param(std::string n, Shape s) : name(std::move(n)), shape(std::move(s)) {
    value.assign(numel(shape), 0.0);
    grad.assign(numel(shape), 0.0);
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

class Tape;

struct Tensor {
  Tape* tape = nullptr;
  int id = -1;

  const Shape& shape() const;
  const std::vector<double>& value() const;
  std::int64_t size() const { return numel(shape()); }
};

class Tape {
 public:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    Param* leaf = nullptr;
    std::function<void(Tape&, Node&)> backward;
  };

  Tensor constant(Shape shape, std::vector<double> value);
  Tensor scalar(double v) { return constant({1}, {v}); }
  Tensor leaf(Param& p);

  // Runs reverse accumulation from a scalar loss; each node is visited at
  // most once, and calling backward twice without reset() is an error.
  void backward(const Tensor& loss);

  void reset();

  const Node& node(int id) const { return nodes_[id]; }
  Node& node(int id) { return nodes_[id]; }
  int size() const { return static_cast<int>(nodes_.size()); }
  bool backward_done() const { return backward_done_; }

  // internal: used by op implementations
  Tensor make_node(Shape shape, bool requires_grad);
  std::vector<double>& grad_buffer(int id);

 private:
  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

// ---- primitive operations ----------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);  // [M,K] x [K,N]

// binary elementwise; the smaller operand may be a scalar or a trailing-shape
// suffix of the larger one (broadcast over leading axes only)
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double c);      // c * a
Tensor add_const(const Tensor& a, double c);  // a + c

Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor clamp_min(const Tensor& a, double threshold);  // pass-through gradient above threshold
Tensor gelu(const Tensor& a);  // tanh approximation, analytic backward

Tensor sum(const Tensor& a, const std::vector<int>& axes = {});
Tensor mean(const Tensor& a, const std::vector<int>& axes = {});

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int lo, int hi);
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int>& perm);

// u: [C,W] or [B,C,W]; w: [C,C',W']; zero padding; cross-correlation indexing
Tensor conv1d(const Tensor& u, const Tensor& w, int pad = 0, int stride = 1);

// group normalization with per-channel affine; u: [C,W] or [B,C,W]
Tensor group_norm(const Tensor& u, int groups, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// window/stride pooling; odd tails are padded on the right with -inf
Tensor maxpool1d(const Tensor& u, int window = 2, int stride = 2);

// stride-2 transpose convolution; u: [C,W] or [B,C,W]; w: [C,C',W']
Tensor transpose_conv1d(const Tensor& u, const Tensor& w, int stride = 2);

// FiLM-style conditioning: z [C,W] scaled per channel by s [B,C] -> [B,C,W];
// z may also be [B,C,W] with matching batch
Tensor scale_channels(const Tensor& z, const Tensor& s);

// ---- optimizer -----------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Param*> params, AdamConfig cfg = {});

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  // applies one update from the accumulated grads, then zeroes them
  void step();
  std::int64_t steps_taken() const { return t_; }

 private:
  std::vector<Param*> params_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// ---- raw kernels (shared with non-AD linear algebra) ----------------------

// C[M,N] (+)= A[M,K] * B[K,N]
void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate);
// C[M,N] (+)= A^T * B with A stored [K,M]
void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate);
// C[M,N] (+)= A * B^T with B stored [N,K]
void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate);

}  // namespace ron::ad
