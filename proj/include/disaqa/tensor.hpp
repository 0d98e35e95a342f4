// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace disaqa {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

/// Raised when operand shapes are incompatible. The message names both shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for out-of-range indices (class targets, embedding ids, spans).
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Propagates this node's grad into its parents' grads.
  std::function<void(Node&)> backward_fn;

  Node() = default;
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;
  // Releases long parent chains iteratively instead of recursively.
  ~Node();

  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Dense row-major tensor with a dynamic reverse-mode tape.
//
// Tensor is a handle: copies share storage. Use clone() for a deep copy.
// Every op builds its output node with parent links only when at least one
// input requires a gradient and gradient recording is enabled, so inference
// under NoGradGuard allocates no tape.
class Tensor {
 public:
  // Undefined handle; only defined() may be called on it.
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor randn(Shape shape, double stddev, Rng& rng);
  static Tensor uniform(Shape shape, double bound, Rng& rng);

  // Builds an op output. `backward` is dropped when no parent requires grad.
  static Tensor from_op(Shape shape, std::vector<double> values,
                        std::vector<Tensor> parents,
                        std::function<void(detail::Node&)> backward);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  std::span<double> values() { return node_->value; }
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t i, std::size_t j) const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  // Empty span when no gradient has been accumulated.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();

  // Seeds d(this)/d(this) = 1 and accumulates into every reachable leaf.
  // Requires a single-element tensor.
  void backward() const;

  // New leaf with the same values and no history.
  Tensor detach() const;
  // Deep copy keeping the requires_grad flag; history is not copied.
  Tensor clone() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

// Thread-local switch for tape recording.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---------------------------------------------------------------------------
// Operations. All are differentiable in every tensor argument.
// ---------------------------------------------------------------------------

/// [m,k] x [k,n] -> [m,n]. Throws DimensionError naming both shapes.
Tensor matmul(const Tensor& a, const Tensor& b);
/// [m,k] x [n,k]^T -> [m,n]. The linear-layer form x W^T.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// Adds a length-n vector to each row of an [m,n] matrix.
Tensor add_bias(const Tensor& a, const Tensor& bias);

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Exact erf-based GELU.
Tensor gelu(const Tensor& x);

/// Softmax along the last axis, max-subtracted. Throws on an empty axis.
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
/// Row softmax of an [m,n] score matrix where masked entries behave as -inf
/// and receive probability exactly 0. `mask` is either a key mask of length
/// n shared by every row or a full row-major [m,n] mask. Every row needs at
/// least one unmasked entry.
Tensor masked_softmax(const Tensor& scores, std::span<const std::uint8_t> mask);

/// Normalizes over the last axis, then gamma * x_hat + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

/// -log softmax(logits)[target] for a 1-D logits vector.
Tensor cross_entropy(const Tensor& logits, std::size_t target);

/// Gathers rows of an [V,d] table.
Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids);

/// Inverted dropout: kept entries scaled by 1/(1-rate). Identity when
/// !train or rate == 0.
Tensor dropout(const Tensor& x, double rate, bool train, Rng& rng);

/// Concatenation of rank-1 or rank-2 tensors along axis 0 or 1.
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
/// Half-open slice [begin,end) along axis of a rank-1 or rank-2 tensor.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace disaqa
