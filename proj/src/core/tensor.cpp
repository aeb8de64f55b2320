#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>

namespace ron::ad {

std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

const Shape& Tensor::shape() const { return tape->node(id).shape; }
const std::vector<double>& Tensor::value() const { return tape->node(id).value; }

Tensor Tape::constant(Shape shape, std::vector<double> value) {
  if (numel(shape) != static_cast<std::int64_t>(value.size()))
    fail_config("constant: shape " + shape_str(shape) + " does not match data length " +
                std::to_string(value.size()));
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Tensor Tape::leaf(Param& p) {
  Node n;
  n.shape = p.shape;
  n.value = p.value;
  n.requires_grad = true;
  n.leaf = &p;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Tensor Tape::make_node(Shape shape, bool requires_grad) {
  Node n;
  n.shape = std::move(shape);
  n.value.assign(numel(n.shape), 0.0);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

std::vector<double>& Tape::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tape::backward(const Tensor& loss) {
  if (backward_done_) fail_config("backward already ran on this tape; record a new graph first");
  if (loss.tape != this) fail_config("backward: loss belongs to another tape");
  if (numel(node(loss.id).shape) != 1) fail_config("backward requires a scalar loss");
  grad_buffer(loss.id)[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.empty() || !n.requires_grad) continue;
    if (n.leaf) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) n.leaf->grad[i] += n.grad[i];
    } else if (n.backward) {
      n.backward(*this, n);
    }
  }
  backward_done_ = true;
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
}

namespace {

void check_tape(const Tensor& a, const Tensor& b) {
  if (a.tape != b.tape) fail_config("operands recorded on different tapes");
}

bool wants_grad(const Tensor& t) { return t.tape->node(t.id).requires_grad; }

}  // namespace

// ---- gemm kernels ----------------------------------------------------------

void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(double) * std::size_t(m) * n);
  for (int i = 0; i < m; ++i) {
    const double* ai = a + std::size_t(i) * k;
    double* ci = c + std::size_t(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const double av = ai[kk];
      const double* bk = b + std::size_t(kk) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bk[j];
    }
  }
}

namespace {

// Scratch transpose keeps all variants on the streaming gemm_nn kernel; the
// reduction forms defeat the vectorizer under strict FP semantics.
void transpose_into(const double* src, int rows, int cols, double* dst) {
  constexpr int kBlock = 32;
  for (int i0 = 0; i0 < rows; i0 += kBlock)
    for (int j0 = 0; j0 < cols; j0 += kBlock) {
      const int i1 = std::min(i0 + kBlock, rows);
      const int j1 = std::min(j0 + kBlock, cols);
      for (int i = i0; i < i1; ++i)
        for (int j = j0; j < j1; ++j) dst[std::size_t(j) * rows + i] = src[std::size_t(i) * cols + j];
    }
}

}  // namespace

void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
  std::vector<double> at(std::size_t(m) * k);
  transpose_into(a, k, m, at.data());
  gemm_nn(m, n, k, at.data(), b, c, accumulate);
}

void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
  std::vector<double> bt(std::size_t(k) * n);
  transpose_into(b, n, k, bt.data());
  gemm_nn(m, n, k, a, bt.data(), c, accumulate);
}

// ---- matmul ----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_tape(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
    fail_config("matmul: incompatible shapes " + shape_str(sa) + " x " + shape_str(sb));
  const int m = sa[0], k = sa[1], n = sb[1];
  Tape& t = *a.tape;
  Tensor out = t.make_node({m, n}, wants_grad(a) || wants_grad(b));
  gemm_nn(m, n, k, a.value().data(), b.value().data(), t.node(out.id).value.data(), false);
  if (t.node(out.id).requires_grad) {
    const int aid = a.id, bid = b.id;
    t.node(out.id).backward = [m, n, k, aid, bid](Tape& tp, Tape::Node& self) {
      if (tp.node(aid).requires_grad) {
        gemm_nt(m, k, n, self.grad.data(), tp.node(bid).value.data(),
                tp.grad_buffer(aid).data(), true);
      }
      if (tp.node(bid).requires_grad) {
        gemm_tn(k, n, m, tp.node(aid).value.data(), self.grad.data(),
                tp.grad_buffer(bid).data(), true);
      }
    };
  }
  return out;
}

// ---- broadcast binary ops ----------------------------------------------

namespace {

// Broadcast contract: equal shapes, or the smaller operand is a scalar, or its
// shape equals a trailing suffix of the larger shape (leading axes repeat).
struct Bcast {
  bool b_small = false;  // which operand broadcasts
  std::int64_t inner = 1;
  std::int64_t outer = 1;
};

Bcast analyze_broadcast(const Shape& sa, const Shape& sb) {
  Bcast bc;
  const std::int64_t na = numel(sa), nb = numel(sb);
  const Shape& big = na >= nb ? sa : sb;
  const Shape& small = na >= nb ? sb : sa;
  bc.b_small = nb <= na;
  const std::int64_t nbig = std::max(na, nb), nsmall = std::min(na, nb);
  if (nsmall == 1) {
    bc.inner = 1;
    bc.outer = nbig;
    return bc;
  }
  if (small.size() > big.size())
    fail_config("broadcast: rank mismatch " + shape_str(sa) + " vs " + shape_str(sb));
  for (std::size_t i = 0; i < small.size(); ++i) {
    if (small[small.size() - 1 - i] != big[big.size() - 1 - i])
      fail_config("broadcast: " + shape_str(sa) + " vs " + shape_str(sb) +
                  " (only leading singleton broadcasting is supported)");
  }
  // leading dims of big beyond small's rank, plus any leading 1s in small
  bc.inner = nsmall;
  bc.outer = nbig / nsmall;
  return bc;
}

template <typename FwdFn, typename BwdFn>
Tensor binary_op(const Tensor& a, const Tensor& b, FwdFn fwd, BwdFn bwd) {
  check_tape(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  Tape& t = *a.tape;
  const bool same = sa == sb;
  Bcast bc;
  if (!same) bc = analyze_broadcast(sa, sb);
  const Shape& out_shape = (same || !bc.b_small) ? (same ? sa : sb) : sa;
  // out_shape is the larger operand's shape
  Tensor out = t.make_node(out_shape, wants_grad(a) || wants_grad(b));
  auto& ov = t.node(out.id).value;
  const auto& av = a.value();
  const auto& bv = b.value();
  if (same) {
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = fwd(av[i], bv[i]);
  } else if (bc.b_small) {
    for (std::int64_t o = 0; o < bc.outer; ++o)
      for (std::int64_t j = 0; j < bc.inner; ++j)
        ov[o * bc.inner + j] = fwd(av[o * bc.inner + j], bv[j]);
  } else {
    for (std::int64_t o = 0; o < bc.outer; ++o)
      for (std::int64_t j = 0; j < bc.inner; ++j)
        ov[o * bc.inner + j] = fwd(av[j], bv[o * bc.inner + j]);
  }
  if (t.node(out.id).requires_grad) {
    const int aid = a.id, bid = b.id;
    t.node(out.id).backward = [aid, bid, same, bc, bwd](Tape& tp, Tape::Node& self) {
      const auto& av2 = tp.node(aid).value;
      const auto& bv2 = tp.node(bid).value;
      const bool ga = tp.node(aid).requires_grad;
      const bool gb = tp.node(bid).requires_grad;
      auto accum = [&](std::int64_t ia, std::int64_t ib, std::int64_t io) {
        double da = 0.0, db = 0.0;
        bwd(av2[ia], bv2[ib], self.grad[io], da, db);
        if (ga) tp.grad_buffer(aid)[ia] += da;
        if (gb) tp.grad_buffer(bid)[ib] += db;
      };
      if (same) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) accum(i, i, i);
      } else if (bc.b_small) {
        for (std::int64_t o = 0; o < bc.outer; ++o)
          for (std::int64_t j = 0; j < bc.inner; ++j)
            accum(o * bc.inner + j, j, o * bc.inner + j);
      } else {
        for (std::int64_t o = 0; o < bc.outer; ++o)
          for (std::int64_t j = 0; j < bc.inner; ++j)
            accum(j, o * bc.inner + j, o * bc.inner + j);
      }
    };
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x + y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x - y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = -g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g * y;
        db = g * x;
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x / y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g / y;
        db = -g * x / (y * y);
      });
}

// ---- unary elementwise ----------------------------------------------------

namespace {

template <typename FwdFn, typename BwdFn>
Tensor unary_op(const Tensor& a, FwdFn fwd, BwdFn dfdx) {
  Tape& t = *a.tape;
  Tensor out = t.make_node(a.shape(), wants_grad(a));
  auto& ov = t.node(out.id).value;
  const auto& av = a.value();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = fwd(av[i]);
  if (t.node(out.id).requires_grad) {
    const int aid = a.id;
    t.node(out.id).backward = [aid, dfdx](Tape& tp, Tape::Node& self) {
      auto& ga = tp.grad_buffer(aid);
      const auto& av2 = tp.node(aid).value;
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        ga[i] += self.grad[i] * dfdx(av2[i], self.value[i]);
    };
  }
  return out;
}

}  // namespace

Tensor scale(const Tensor& a, double c) {
  return unary_op(
      a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor add_const(const Tensor& a, double c) {
  return unary_op(
      a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor sin(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Tensor cos(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor log(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor clamp_min(const Tensor& a, double threshold) {
  return unary_op(
      a, [threshold](double x) { return x < threshold ? threshold : x; },
      [threshold](double x, double) { return x > threshold ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  constexpr double kRoot2OverPi = 0.7978845608028654;
  constexpr double kCubic = 0.044715;
  return unary_op(
      a,
      [](double x) {
        const double inner = kRoot2OverPi * (x + kCubic * x * x * x);
        return 0.5 * x * (1.0 + std::tanh(inner));
      },
      [](double x, double) {
        const double inner = kRoot2OverPi * (x + kCubic * x * x * x);
        const double th = std::tanh(inner);
        const double dinner = kRoot2OverPi * (1.0 + 3.0 * kCubic * x * x);
        return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * dinner;
      });
}

// ---- reductions -------------------------------------------------------------

namespace {

struct ReducePlan {
  Shape out_shape;
  std::vector<std::int64_t> out_offset_of;  // per input linear index (empty = all to 0)
  std::int64_t count = 1;
};

ReducePlan plan_reduce(const Shape& in, const std::vector<int>& axes) {
  ReducePlan plan;
  if (axes.empty()) {
    plan.out_shape = {1};
    plan.count = numel(in);
    return plan;
  }
  std::vector<bool> reduced(in.size(), false);
  for (int ax : axes) {
    if (ax < 0 || ax >= static_cast<int>(in.size()))
      fail_config("reduce: axis " + std::to_string(ax) + " out of range for " + shape_str(in));
    if (reduced[ax]) fail_config("reduce: duplicate axis");
    reduced[ax] = true;
  }
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (reduced[i]) {
      plan.count *= in[i];
    } else {
      plan.out_shape.push_back(in[i]);
    }
  }
  if (plan.out_shape.empty()) plan.out_shape = {1};
  // strides of the output laid over kept axes
  std::vector<std::int64_t> out_strides(in.size(), 0);
  std::int64_t stride = 1;
  for (int i = static_cast<int>(in.size()) - 1; i >= 0; --i) {
    if (!reduced[i]) {
      out_strides[i] = stride;
      stride *= in[i];
    }
  }
  const std::int64_t n = numel(in);
  plan.out_offset_of.resize(n);
  std::vector<std::int64_t> in_strides(in.size());
  std::int64_t s = 1;
  for (int i = static_cast<int>(in.size()) - 1; i >= 0; --i) {
    in_strides[i] = s;
    s *= in[i];
  }
  for (std::int64_t idx = 0; idx < n; ++idx) {
    std::int64_t rem = idx, off = 0;
    for (std::size_t i = 0; i < in.size(); ++i) {
      const std::int64_t c = rem / in_strides[i];
      rem %= in_strides[i];
      off += c * out_strides[i];
    }
    plan.out_offset_of[idx] = off;
  }
  return plan;
}

Tensor reduce_op(const Tensor& a, const std::vector<int>& axes, bool take_mean) {
  Tape& t = *a.tape;
  auto plan = std::make_shared<ReducePlan>(plan_reduce(a.shape(), axes));
  Tensor out = t.make_node(plan->out_shape, wants_grad(a));
  auto& ov = t.node(out.id).value;
  const auto& av = a.value();
  const double w = take_mean ? 1.0 / static_cast<double>(plan->count) : 1.0;
  if (plan->out_offset_of.empty()) {
    double acc = 0.0;
    for (double x : av) acc += x;
    ov[0] = acc * w;
  } else {
    for (std::size_t i = 0; i < av.size(); ++i) ov[plan->out_offset_of[i]] += av[i] * w;
  }
  if (t.node(out.id).requires_grad) {
    const int aid = a.id;
    t.node(out.id).backward = [aid, plan, w](Tape& tp, Tape::Node& self) {
      auto& ga = tp.grad_buffer(aid);
      if (plan->out_offset_of.empty()) {
        const double g = self.grad[0] * w;
        for (auto& x : ga) x += g;
      } else {
        for (std::size_t i = 0; i < ga.size(); ++i)
          ga[i] += self.grad[plan->out_offset_of[i]] * w;
      }
    };
  }
  return out;
}

}  // namespace

Tensor sum(const Tensor& a, const std::vector<int>& axes) { return reduce_op(a, axes, false); }
Tensor mean(const Tensor& a, const std::vector<int>& axes) { return reduce_op(a, axes, true); }

// ---- shape ops --------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != numel(a.shape()))
    fail_config("reshape: element count mismatch " + shape_str(a.shape()) + " -> " +
                shape_str(shape));
  Tape& t = *a.tape;
  Tensor out = t.make_node(shape, wants_grad(a));
  t.node(out.id).value = a.value();
  if (t.node(out.id).requires_grad) {
    const int aid = a.id;
    t.node(out.id).backward = [aid](Tape& tp, Tape::Node& self) {
      auto& ga = tp.grad_buffer(aid);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    };
  }
  return out;
}

namespace {

std::vector<std::int64_t> row_major_strides(const Shape& s) {
  std::vector<std::int64_t> st(s.size());
  std::int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

}  // namespace

Tensor permute(const Tensor& a, const std::vector<int>& perm) {
  const Shape& sa = a.shape();
  if (perm.size() != sa.size()) fail_config("permute: rank mismatch");
  Shape out_shape(sa.size());
  std::vector<bool> seen(sa.size(), false);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] < 0 || perm[i] >= static_cast<int>(sa.size()) || seen[perm[i]])
      fail_config("permute: invalid permutation");
    seen[perm[i]] = true;
    out_shape[i] = sa[perm[i]];
  }
  Tape& t = *a.tape;
  Tensor out = t.make_node(out_shape, wants_grad(a));
  const auto in_strides = row_major_strides(sa);
  const auto out_strides = row_major_strides(out_shape);
  // map: input index for each output index
  auto mapping = std::make_shared<std::vector<std::int64_t>>(numel(out_shape));
  const std::int64_t n = numel(out_shape);
  std::vector<std::int64_t> coord(sa.size(), 0);
  for (std::int64_t o = 0; o < n; ++o) {
    std::int64_t rem = o, in_off = 0;
    for (std::size_t i = 0; i < out_shape.size(); ++i) {
      const std::int64_t c = rem / out_strides[i];
      rem %= out_strides[i];
      in_off += c * in_strides[perm[i]];
    }
    (*mapping)[o] = in_off;
  }
  auto& ov = t.node(out.id).value;
  const auto& av = a.value();
  for (std::int64_t o = 0; o < n; ++o) ov[o] = av[(*mapping)[o]];
  if (t.node(out.id).requires_grad) {
    const int aid = a.id;
    t.node(out.id).backward = [aid, mapping](Tape& tp, Tape::Node& self) {
      auto& ga = tp.grad_buffer(aid);
      for (std::size_t o = 0; o < self.grad.size(); ++o) ga[(*mapping)[o]] += self.grad[o];
    };
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) fail_config("concat: empty list");
  Tape& t = *parts[0].tape;
  const Shape& s0 = parts[0].shape();
  if (axis < 0 || axis >= static_cast<int>(s0.size())) fail_config("concat: bad axis");
  Shape out_shape = s0;
  bool req = false;
  int total_axis = 0;
  for (const Tensor& p : parts) {
    check_tape(parts[0], p);
    const Shape& sp = p.shape();
    if (sp.size() != s0.size()) fail_config("concat: rank mismatch");
    for (std::size_t i = 0; i < sp.size(); ++i) {
      if (static_cast<int>(i) != axis && sp[i] != s0[i])
        fail_config("concat: shape mismatch " + shape_str(s0) + " vs " + shape_str(sp));
    }
    total_axis += sp[axis];
    req = req || wants_grad(p);
  }
  out_shape[axis] = total_axis;
  Tensor out = t.make_node(out_shape, req);
  std::int64_t outer = 1;
  for (int i = 0; i < axis; ++i) outer *= s0[i];
  std::int64_t inner = 1;
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  auto& ov = t.node(out.id).value;
  const std::int64_t out_block = static_cast<std::int64_t>(total_axis) * inner;
  std::int64_t axis_pos = 0;
  std::vector<int> ids;
  std::vector<std::int64_t> offsets;
  for (const Tensor& p : parts) {
    const std::int64_t blk = static_cast<std::int64_t>(p.shape()[axis]) * inner;
    const auto& pv = p.value();
    for (std::int64_t o = 0; o < outer; ++o) {
      std::memcpy(ov.data() + o * out_block + axis_pos * inner, pv.data() + o * blk,
                  sizeof(double) * blk);
    }
    ids.push_back(p.id);
    offsets.push_back(axis_pos);
    axis_pos += p.shape()[axis];
  }
  if (req) {
    const std::int64_t inner_c = inner, outer_c = outer, out_block_c = out_block;
    t.node(out.id).backward = [ids, offsets, inner_c, outer_c, out_block_c](Tape& tp,
                                                                            Tape::Node& self) {
      for (std::size_t pi = 0; pi < ids.size(); ++pi) {
        if (!tp.node(ids[pi]).requires_grad) continue;
        auto& gp = tp.grad_buffer(ids[pi]);
        const std::int64_t blk = static_cast<std::int64_t>(gp.size()) / outer_c;
        for (std::int64_t o = 0; o < outer_c; ++o) {
          const double* src = self.grad.data() + o * out_block_c + offsets[pi] * inner_c;
          double* dst = gp.data() + o * blk;
          for (std::int64_t j = 0; j < blk; ++j) dst[j] += src[j];
        }
      }
    };
  }
  return out;
}

Tensor slice(const Tensor& a, int axis, int lo, int hi) {
  const Shape& sa = a.shape();
  if (axis < 0 || axis >= static_cast<int>(sa.size())) fail_config("slice: bad axis");
  if (lo < 0 || hi > sa[axis] || lo >= hi) fail_config("slice: bad range");
  Shape out_shape = sa;
  out_shape[axis] = hi - lo;
  Tape& t = *a.tape;
  Tensor out = t.make_node(out_shape, wants_grad(a));
  std::int64_t outer = 1;
  for (int i = 0; i < axis; ++i) outer *= sa[i];
  std::int64_t inner = 1;
  for (std::size_t i = axis + 1; i < sa.size(); ++i) inner *= sa[i];
  const std::int64_t in_block = static_cast<std::int64_t>(sa[axis]) * inner;
  const std::int64_t out_block = static_cast<std::int64_t>(hi - lo) * inner;
  auto& ov = t.node(out.id).value;
  const auto& av = a.value();
  for (std::int64_t o = 0; o < outer; ++o) {
    std::memcpy(ov.data() + o * out_block, av.data() + o * in_block + lo * inner,
                sizeof(double) * out_block);
  }
  if (t.node(out.id).requires_grad) {
    const int aid = a.id;
    t.node(out.id).backward = [aid, outer, inner, in_block, out_block, lo](Tape& tp,
                                                                           Tape::Node& self) {
      auto& ga = tp.grad_buffer(aid);
      for (std::int64_t o = 0; o < outer; ++o) {
        const double* src = self.grad.data() + o * out_block;
        double* dst = ga.data() + o * in_block + lo * inner;
        for (std::int64_t j = 0; j < out_block; ++j) dst[j] += src[j];
      }
    };
  }
  return out;
}

// ---- structured ops ---------------------------------------------------------

namespace {

struct CWView {
  int batch = 1;
  int channels = 0;
  int width = 0;
  bool rank2 = false;
};

CWView cw_view(const Shape& s, const char* who) {
  CWView v;
  if (s.size() == 2) {
    v.rank2 = true;
    v.channels = s[0];
    v.width = s[1];
  } else if (s.size() == 3) {
    v.batch = s[0];
    v.channels = s[1];
    v.width = s[2];
  } else {
    fail_config(std::string(who) + ": expected [C,W] or [B,C,W], got " + shape_str(s));
  }
  return v;
}

// patches[(b*wout+i), (c*wk+m)] = u[b, c, i*stride + m - pad]
void im2col(const double* u, int batch, int channels, int width, int wk, int pad, int stride,
            int wout, double* patches) {
  for (int b = 0; b < batch; ++b) {
    for (int i = 0; i < wout; ++i) {
      double* row = patches + (std::size_t(b) * wout + i) * (std::size_t(channels) * wk);
      const int base = i * stride - pad;
      for (int c = 0; c < channels; ++c) {
        const double* uc = u + (std::size_t(b) * channels + c) * width;
        for (int m = 0; m < wk; ++m) {
          const int src = base + m;
          row[std::size_t(c) * wk + m] = (src >= 0 && src < width) ? uc[src] : 0.0;
        }
      }
    }
  }
}

}  // namespace

Tensor conv1d(const Tensor& u, const Tensor& w, int pad, int stride) {
  check_tape(u, w);
  const CWView v = cw_view(u.shape(), "conv1d");
  const Shape& sw = w.shape();
  if (sw.size() != 3) fail_config("conv1d: weight must be [C,C',W'], got " + shape_str(sw));
  if (sw[0] != v.channels)
    fail_config("conv1d: input channels " + std::to_string(v.channels) +
                " do not match weight " + shape_str(sw));
  const int cin = sw[0], cout = sw[1], wk = sw[2];
  if (stride < 1) fail_config("conv1d: stride must be >= 1");
  if (v.width + 2 * pad < wk) fail_config("conv1d: width too small for kernel");
  const int wout = (v.width + 2 * pad - wk) / stride + 1;

  Tape& t = *u.tape;
  Shape out_shape = v.rank2 ? Shape{cout, wout} : Shape{v.batch, cout, wout};
  Tensor out = t.make_node(out_shape, wants_grad(u) || wants_grad(w));

  const std::size_t prows = std::size_t(v.batch) * wout;
  const std::size_t pcols = std::size_t(cin) * wk;
  std::vector<double> patches(prows * pcols);
  im2col(u.value().data(), v.batch, cin, v.width, wk, pad, stride, wout, patches.data());

  // weight rearranged [C*W', C']
  std::vector<double> wmat(pcols * cout);
  {
    const auto& wv = w.value();
    for (int c = 0; c < cin; ++c)
      for (int co = 0; co < cout; ++co)
        for (int m = 0; m < wk; ++m)
          wmat[(std::size_t(c) * wk + m) * cout + co] = wv[(std::size_t(c) * cout + co) * wk + m];
  }
  std::vector<double> out2(prows * cout);
  gemm_nn(static_cast<int>(prows), cout, static_cast<int>(pcols), patches.data(), wmat.data(),
          out2.data(), false);
  {
    auto& ov = t.node(out.id).value;
    for (int b = 0; b < v.batch; ++b)
      for (int i = 0; i < wout; ++i)
        for (int co = 0; co < cout; ++co)
          ov[(std::size_t(b) * cout + co) * wout + i] =
              out2[(std::size_t(b) * wout + i) * cout + co];
  }

  if (t.node(out.id).requires_grad) {
    const int uid = u.id, wid = w.id;
    const CWView vc = v;
    t.node(out.id).backward = [uid, wid, vc, cin, cout, wk, pad, stride, wout](Tape& tp,
                                                                               Tape::Node& self) {
      const std::size_t prows2 = std::size_t(vc.batch) * wout;
      const std::size_t pcols2 = std::size_t(cin) * wk;
      // g2 [B*Wout, C']
      std::vector<double> g2(prows2 * cout);
      for (int b = 0; b < vc.batch; ++b)
        for (int i = 0; i < wout; ++i)
          for (int co = 0; co < cout; ++co)
            g2[(std::size_t(b) * wout + i) * cout + co] =
                self.grad[(std::size_t(b) * cout + co) * wout + i];
      if (tp.node(wid).requires_grad) {
        std::vector<double> patches2(prows2 * pcols2);
        im2col(tp.node(uid).value.data(), vc.batch, cin, vc.width, wk, pad, stride, wout,
               patches2.data());
        std::vector<double> dwmat(pcols2 * cout);
        gemm_tn(static_cast<int>(pcols2), cout, static_cast<int>(prows2), patches2.data(),
                g2.data(), dwmat.data(), false);
        auto& gw = tp.grad_buffer(wid);
        for (int c = 0; c < cin; ++c)
          for (int co = 0; co < cout; ++co)
            for (int m = 0; m < wk; ++m)
              gw[(std::size_t(c) * cout + co) * wk + m] +=
                  dwmat[(std::size_t(c) * wk + m) * cout + co];
      }
      if (tp.node(uid).requires_grad) {
        // dP = g2 * wmat^T, then col2im
        std::vector<double> wmat2(pcols2 * cout);
        const auto& wv = tp.node(wid).value;
        for (int c = 0; c < cin; ++c)
          for (int co = 0; co < cout; ++co)
            for (int m = 0; m < wk; ++m)
              wmat2[(std::size_t(c) * wk + m) * cout + co] =
                  wv[(std::size_t(c) * cout + co) * wk + m];
        std::vector<double> dpatches(prows2 * pcols2);
        gemm_nt(static_cast<int>(prows2), static_cast<int>(pcols2), cout, g2.data(), wmat2.data(),
                dpatches.data(), false);
        auto& gu = tp.grad_buffer(uid);
        for (int b = 0; b < vc.batch; ++b)
          for (int i = 0; i < wout; ++i) {
            const double* row = dpatches.data() + (std::size_t(b) * wout + i) * pcols2;
            const int base = i * stride - pad;
            for (int c = 0; c < cin; ++c) {
              double* guc = gu.data() + (std::size_t(b) * cin + c) * vc.width;
              for (int m = 0; m < wk; ++m) {
                const int dst = base + m;
                if (dst >= 0 && dst < vc.width) guc[dst] += row[std::size_t(c) * wk + m];
              }
            }
          }
      }
    };
  }
  return out;
}

Tensor group_norm(const Tensor& u, int groups, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  check_tape(u, gamma);
  check_tape(u, beta);
  const CWView v = cw_view(u.shape(), "group_norm");
  if (groups < 1 || v.channels % groups != 0)
    fail_config("group_norm: C=" + std::to_string(v.channels) + " not divisible by G=" +
                std::to_string(groups));
  if (gamma.shape() != Shape{v.channels} || beta.shape() != Shape{v.channels})
    fail_config("group_norm: gamma/beta must be [C]");
  const int cg = v.channels / groups;
  const std::int64_t m = static_cast<std::int64_t>(cg) * v.width;

  Tape& t = *u.tape;
  Tensor out =
      t.make_node(u.shape(), wants_grad(u) || wants_grad(gamma) || wants_grad(beta));
  auto stats = std::make_shared<std::vector<double>>(std::size_t(v.batch) * groups * 2);
  const auto& uv = u.value();
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  auto& ov = t.node(out.id).value;
  for (int b = 0; b < v.batch; ++b) {
    for (int g = 0; g < groups; ++g) {
      const double* base = uv.data() + (std::size_t(b) * v.channels + std::size_t(g) * cg) * v.width;
      double mu = 0.0;
      for (std::int64_t i = 0; i < m; ++i) mu += base[i];
      mu /= static_cast<double>(m);
      double var = 0.0;
      for (std::int64_t i = 0; i < m; ++i) {
        const double d = base[i] - mu;
        var += d * d;
      }
      var /= static_cast<double>(m);
      const double inv = 1.0 / std::sqrt(var + eps);
      (*stats)[(std::size_t(b) * groups + g) * 2] = mu;
      (*stats)[(std::size_t(b) * groups + g) * 2 + 1] = inv;
      for (int cc = 0; cc < cg; ++cc) {
        const int c = g * cg + cc;
        const double* uc = uv.data() + (std::size_t(b) * v.channels + c) * v.width;
        double* oc = ov.data() + (std::size_t(b) * v.channels + c) * v.width;
        for (int i = 0; i < v.width; ++i) oc[i] = gv[c] * (uc[i] - mu) * inv + bv[c];
      }
    }
  }
  if (t.node(out.id).requires_grad) {
    const int uid = u.id, gid = gamma.id, bid = beta.id;
    const CWView vc = v;
    const int groups_c = groups;
    t.node(out.id).backward = [uid, gid, bid, vc, groups_c, stats](Tape& tp, Tape::Node& self) {
      const int cg2 = vc.channels / groups_c;
      const std::int64_t m2 = static_cast<std::int64_t>(cg2) * vc.width;
      const auto& uv2 = tp.node(uid).value;
      const auto& gv2 = tp.node(gid).value;
      const bool need_du = tp.node(uid).requires_grad;
      const bool need_dg = tp.node(gid).requires_grad;
      const bool need_db = tp.node(bid).requires_grad;
      for (int b = 0; b < vc.batch; ++b) {
        for (int g = 0; g < groups_c; ++g) {
          const double mu = (*stats)[(std::size_t(b) * groups_c + g) * 2];
          const double inv = (*stats)[(std::size_t(b) * groups_c + g) * 2 + 1];
          // group sums for the normalization backward
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (int cc = 0; cc < cg2; ++cc) {
            const int c = g * cg2 + cc;
            const std::size_t off = (std::size_t(b) * vc.channels + c) * vc.width;
            for (int i = 0; i < vc.width; ++i) {
              const double xhat = (uv2[off + i] - mu) * inv;
              const double dxhat = self.grad[off + i] * gv2[c];
              sum_dxhat += dxhat;
              sum_dxhat_xhat += dxhat * xhat;
            }
          }
          const double inv_m = 1.0 / static_cast<double>(m2);
          for (int cc = 0; cc < cg2; ++cc) {
            const int c = g * cg2 + cc;
            const std::size_t off = (std::size_t(b) * vc.channels + c) * vc.width;
            double dgamma = 0.0, dbeta = 0.0;
            for (int i = 0; i < vc.width; ++i) {
              const double xhat = (uv2[off + i] - mu) * inv;
              const double go = self.grad[off + i];
              if (need_du) {
                const double dxhat = go * gv2[c];
                tp.grad_buffer(uid)[off + i] +=
                    inv * (dxhat - inv_m * sum_dxhat - xhat * inv_m * sum_dxhat_xhat);
              }
              dgamma += go * xhat;
              dbeta += go;
            }
            if (need_dg) tp.grad_buffer(gid)[c] += dgamma;
            if (need_db) tp.grad_buffer(bid)[c] += dbeta;
          }
        }
      }
    };
  }
  return out;
}

Tensor maxpool1d(const Tensor& u, int window, int stride) {
  const CWView v = cw_view(u.shape(), "maxpool1d");
  if (window < 1 || stride < 1) fail_config("maxpool1d: bad window/stride");
  const int wout = (std::max(v.width - window, 0) + stride - 1) / stride + 1;
  Tape& t = *u.tape;
  Shape out_shape = v.rank2 ? Shape{v.channels, wout} : Shape{v.batch, v.channels, wout};
  Tensor out = t.make_node(out_shape, wants_grad(u));
  auto argmax = std::make_shared<std::vector<std::int32_t>>(numel(out_shape));
  const auto& uv = u.value();
  auto& ov = t.node(out.id).value;
  std::int64_t oi = 0;
  for (int b = 0; b < v.batch; ++b) {
    for (int c = 0; c < v.channels; ++c) {
      const double* uc = uv.data() + (std::size_t(b) * v.channels + c) * v.width;
      for (int i = 0; i < wout; ++i, ++oi) {
        const int start = i * stride;
        double best = -std::numeric_limits<double>::infinity();
        int best_idx = start;
        for (int mm = 0; mm < window; ++mm) {
          const int src = start + mm;
          if (src >= v.width) break;  // right edge: implicit -inf padding
          if (uc[src] > best) {
            best = uc[src];
            best_idx = src;
          }
        }
        ov[oi] = best;
        (*argmax)[oi] = best_idx;
      }
    }
  }
  if (t.node(out.id).requires_grad) {
    const int uid = u.id;
    const CWView vc = v;
    const int wout_c = wout;
    t.node(out.id).backward = [uid, vc, wout_c, argmax](Tape& tp, Tape::Node& self) {
      auto& gu = tp.grad_buffer(uid);
      std::int64_t oi2 = 0;
      for (int b = 0; b < vc.batch; ++b)
        for (int c = 0; c < vc.channels; ++c) {
          double* guc = gu.data() + (std::size_t(b) * vc.channels + c) * vc.width;
          for (int i = 0; i < wout_c; ++i, ++oi2) guc[(*argmax)[oi2]] += self.grad[oi2];
        }
    };
  }
  return out;
}

Tensor transpose_conv1d(const Tensor& u, const Tensor& w, int stride) {
  check_tape(u, w);
  const CWView v = cw_view(u.shape(), "transpose_conv1d");
  const Shape& sw = w.shape();
  if (sw.size() != 3 || sw[0] != v.channels)
    fail_config("transpose_conv1d: weight must be [C,C',W'] with C matching input");
  const int cin = sw[0], cout = sw[1], wk = sw[2];
  const int wout = (v.width - 1) * stride + wk;
  Tape& t = *u.tape;
  Shape out_shape = v.rank2 ? Shape{cout, wout} : Shape{v.batch, cout, wout};
  Tensor out = t.make_node(out_shape, wants_grad(u) || wants_grad(w));
  auto& ov = t.node(out.id).value;
  const auto& uv = u.value();
  const auto& wv = w.value();
  for (int b = 0; b < v.batch; ++b) {
    for (int c = 0; c < cin; ++c) {
      const double* uc = uv.data() + (std::size_t(b) * cin + c) * v.width;
      for (int co = 0; co < cout; ++co) {
        double* oc = ov.data() + (std::size_t(b) * cout + co) * wout;
        const double* wc = wv.data() + (std::size_t(c) * cout + co) * wk;
        for (int j = 0; j < v.width; ++j) {
          const double x = uc[j];
          for (int mm = 0; mm < wk; ++mm) oc[j * stride + mm] += x * wc[mm];
        }
      }
    }
  }
  if (t.node(out.id).requires_grad) {
    const int uid = u.id, wid = w.id;
    const CWView vc = v;
    t.node(out.id).backward = [uid, wid, vc, cin, cout, wk, stride](Tape& tp, Tape::Node& self) {
      const int wout2 = (vc.width - 1) * stride + wk;
      const auto& uv2 = tp.node(uid).value;
      const auto& wv2 = tp.node(wid).value;
      const bool need_du = tp.node(uid).requires_grad;
      const bool need_dw = tp.node(wid).requires_grad;
      for (int b = 0; b < vc.batch; ++b) {
        for (int c = 0; c < cin; ++c) {
          const double* uc = uv2.data() + (std::size_t(b) * cin + c) * vc.width;
          double* guc = need_du ? tp.grad_buffer(uid).data() + (std::size_t(b) * cin + c) * vc.width
                                : nullptr;
          for (int co = 0; co < cout; ++co) {
            const double* goc = self.grad.data() + (std::size_t(b) * cout + co) * wout2;
            const double* wc = wv2.data() + (std::size_t(c) * cout + co) * wk;
            double* gwc = need_dw
                              ? tp.grad_buffer(wid).data() + (std::size_t(c) * cout + co) * wk
                              : nullptr;
            for (int j = 0; j < vc.width; ++j) {
              for (int mm = 0; mm < wk; ++mm) {
                const double g = goc[j * stride + mm];
                if (need_du) guc[j] += g * wc[mm];
                if (need_dw) gwc[mm] += g * uc[j];
              }
            }
          }
        }
      }
    };
  }
  return out;
}

Tensor scale_channels(const Tensor& z, const Tensor& s) {
  check_tape(z, s);
  const Shape& sz = z.shape();
  const Shape& ss = s.shape();
  if (ss.size() != 2) fail_config("scale_channels: scales must be [B,C]");
  const int batch = ss[0], channels = ss[1];
  bool shared_z;
  int width;
  if (sz.size() == 2) {
    shared_z = true;
    if (sz[0] != channels) fail_config("scale_channels: channel mismatch");
    width = sz[1];
  } else if (sz.size() == 3) {
    shared_z = false;
    if (sz[0] != batch || sz[1] != channels)
      fail_config("scale_channels: batch/channel mismatch");
    width = sz[2];
  } else {
    fail_config("scale_channels: z must be [C,W] or [B,C,W]");
  }
  Tape& t = *z.tape;
  Tensor out = t.make_node({batch, channels, width}, wants_grad(z) || wants_grad(s));
  auto& ov = t.node(out.id).value;
  const auto& zv = z.value();
  const auto& sv = s.value();
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < channels; ++c) {
      const double sc = sv[std::size_t(b) * channels + c];
      const double* zc =
          zv.data() + (shared_z ? std::size_t(c) : (std::size_t(b) * channels + c)) * width;
      double* oc = ov.data() + (std::size_t(b) * channels + c) * width;
      for (int i = 0; i < width; ++i) oc[i] = zc[i] * sc;
    }
  if (t.node(out.id).requires_grad) {
    const int zid = z.id, sid = s.id;
    t.node(out.id).backward = [zid, sid, batch, channels, width, shared_z](Tape& tp,
                                                                           Tape::Node& self) {
      const auto& zv2 = tp.node(zid).value;
      const auto& sv2 = tp.node(sid).value;
      const bool need_dz = tp.node(zid).requires_grad;
      const bool need_ds = tp.node(sid).requires_grad;
      for (int b = 0; b < batch; ++b)
        for (int c = 0; c < channels; ++c) {
          const double sc = sv2[std::size_t(b) * channels + c];
          const std::size_t zoff =
              (shared_z ? std::size_t(c) : (std::size_t(b) * channels + c)) * std::size_t(width);
          const double* go = self.grad.data() + (std::size_t(b) * channels + c) * width;
          double ds = 0.0;
          for (int i = 0; i < width; ++i) {
            if (need_dz) tp.grad_buffer(zid)[zoff + i] += go[i] * sc;
            ds += go[i] * zv2[zoff + i];
          }
          if (need_ds) tp.grad_buffer(sid)[std::size_t(b) * channels + c] += ds;
        }
    };
  }
  return out;
}

// ---- Adam -------------------------------------------------------------------

Adam::Adam(std::vector<Param*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i]->value.size(), 0.0);
    v_[i].assign(params_[i]->value.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Param& p = *params_[pi];
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    p.zero_grad();
  }
}

}  // namespace ron::ad
