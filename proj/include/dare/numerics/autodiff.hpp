#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "dare/numerics/rng.hpp"
#include "dare/numerics/tensor.hpp"

// Reverse-mode differentiation over a linear tape. Nodes are appended in
// evaluation order, so walking the tape backwards is a valid topological
// order and gradient accumulation is deterministic.
namespace dare::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::int32_t id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
  const Shape& shape() const;
  std::int64_t rows() const;
  std::int64_t cols() const;
};

// Contiguous row range [begin, begin + length).
struct RowRange {
  std::int64_t begin = 0;
  std::int64_t length = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  const Tensor& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  bool requires_grad(Var v) const { return v.valid() && nodes_[static_cast<std::size_t>(v.id)].requires_grad; }
  // Gradient accumulated by the last backward(); zeros when the node received none.
  Tensor grad(Var v) const;

  void backward(Var loss);

  // Op implementation surface.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward fn);
  Var record(Tensor value, bool needs_grad, Backward fn);
  // Returns the gradient buffer of `v` (zero-initialised on first use), or
  // nullptr when `v` does not require a gradient.
  Tensor* accumulator(Var v);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::deque<Node> nodes_;
};

// Elementwise
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, Real s);
// Multiplies every entry of `a` by the single-element `s`.
Var scale_by(Var a, Var s);
Var exp(Var a);
Var gelu(Var x);
Var detach(Var a);
Var reshape(Var a, Shape shape);

// Row-wise (a tensor is viewed as rows x last-dimension)
Var add_bias(Var x, Var bias);
Var matmul(Var a, Var b);
Var matmul_bt(Var a, Var b);
Var transpose(Var a);
Var linear(Var x, Var weight, Var bias);
Var layer_norm(Var x, Var gamma, Var beta, Real eps = Real(1e-5));
Var l2_normalize_rows(Var x);
Var gather_rows(Var x, std::vector<std::int32_t> index);
Var concat_rows(const std::vector<Var>& parts);
// Mean of rows [offsets[g], offsets[g+1]) for each g.
Var segment_mean_rows(Var x, std::vector<std::int64_t> offsets);

// Multi-head self-attention. `qkv` rows hold [q | k | v] each of width D;
// tokens attend only within their group. Returns rows x D.
Var attention(Var qkv, std::vector<RowRange> groups, int heads);

// Rotary embedding: row r is rotated pairwise by angle positions[r] * base^(-2k/D).
Var rope(Var x, std::vector<std::int32_t> positions, double base = 10000.0);

// Reductions / losses
Var sum(Var x);
Var mean(Var x);
Var mse(Var a, Var b);
Var cross_entropy(Var logits, const std::vector<std::int32_t>& labels);
// Row-wise log-softmax.
Var log_softmax(Var x);

// Signal ops for B x C x T tensors
Var channel_mix(Var x, Var weights);
Var depthwise_conv1d(Var x, Var kernels);

// Inverted dropout; identity when rate == 0.
Var dropout(Var x, Real rate, Rng& rng);

// Plain-value helpers shared with non-differentiated code.
void rope_rows(Real* data, std::int64_t rows, std::int64_t cols, const std::vector<std::int32_t>& positions,
               double base, bool inverse);
Real gelu_value(Real x);

}  // namespace dare::ad
