#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "clip/nd/tensor.hpp"

namespace clip::nd {

/// One recorded value in the computation graph. Interior nodes carry a
/// backward rule that reads `grad` and accumulates into their parents.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  /// Gradient buffer, zero-allocated on first use.
  Tensor& grad_buffer();
};

/// Handle to a graph node. Copies alias the same node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  /// In-place access for optimizers and checkpoint loading.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Leaf that never receives a gradient.
Var constant(Tensor value);
/// Trainable leaf.
Var parameter(Tensor value);

/// Reverse-mode gradients of a scalar `loss` with respect to `wrt`.
/// Leaves the loss does not reach get zero gradients. Every node in the graph
/// is visited once, in reverse topological order.
std::vector<Tensor> grad(const Var& loss, std::span<const Var> wrt);

// ---------------------------------------------------------------------------
// Primitives. Each records a backward rule when any input requires a gradient.

/// Elementwise sum. `b` may also be a row vector ({C} or {1,C}) broadcast over the rows of `a`.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Elementwise product of equal shapes.
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
/// Multiplies every entry of `a` by the single value held in `s`.
Var mul_scalar(const Var& a, const Var& s);

Var matmul(const Var& a, const Var& b);
/// a · bᵀ without materializing the transpose in the graph.
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);

Var exp(const Var& a);
Var log(const Var& a);
/// tanh-approximated GELU.
Var gelu(const Var& a);

Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
/// Row-wise layer normalization followed by the affine `gain`, `bias` (both {C}).
Var layernorm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
/// Divides each row by its Euclidean norm; a zero row is a std::domain_error.
Var l2_normalize_rows(const Var& a);

/// Rows of `table` selected by `ids` (embedding lookup / row gather).
Var gather_rows(const Var& table, std::span<const std::size_t> ids);
/// Replaces entries whose mask byte is non-zero with `value`.
Var mask_fill(const Var& a, std::span<const unsigned char> mask, double value);

Var concat_rows(const Var& a, const Var& b);
/// Averages consecutive blocks of rows: [(G·S)×D] → [G×D].
Var segment_mean(const Var& a, std::size_t groups);
Var reshape(const Var& a, Shape shape);

Var sum(const Var& a);
Var mean(const Var& a);

/// Scaled dot-product multi-head attention over a batch of sequences.
/// q is [(B·Tq)×D]; k and v are [(B·Tk)×D]. With `causal`, query i attends to
/// keys 0..i only (requires Tq == Tk).
Var attention(const Var& q, const Var& k, const Var& v, std::size_t batch, std::size_t heads,
              bool causal);

/// Mean softmax cross-entropy of `logits` rows against class indices.
Var cross_entropy(const Var& logits, std::span<const std::size_t> targets);
/// Mean sigmoid binary cross-entropy over every entry.
Var sigmoid_bce(const Var& logits, const Tensor& targets);

}  // namespace clip::nd
