// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#include "disaqa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>

namespace disaqa {

namespace {

thread_local bool g_grad_enabled = true;

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

// Grad buffer of parent `index`, or null when that parent is not tracked.
inline double* parent_grad(detail::Node& self, std::size_t index) {
  auto& p = *self.parents[index];
  if (!p.requires_grad) return nullptr;
  return p.ensure_grad().data();
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }


Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<detail::Node>()) {
  node_->value.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : node_(std::make_shared<detail::Node>()) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
}

Tensor Tensor::randn(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(std::move(shape));
  for (auto& v : t.node_->value) v = dist(rng);
  return t;
}

namespace detail {

Node::~Node() {
  std::vector<std::shared_ptr<Node>> pending = std::move(parents);
  while (!pending.empty()) {
    std::shared_ptr<Node> p = std::move(pending.back());
    pending.pop_back();
    if (p.use_count() == 1) {
      for (auto& q : p->parents) pending.push_back(std::move(q));
      p->parents.clear();
    }
  }
}

}  // namespace detail

Tensor Tensor::uniform(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& v : t.node_->value) v = dist(rng);
  return t;
}

Tensor Tensor::from_op(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                       std::function<void(detail::Node&)> backward) {
  Tensor out(std::move(shape), std::move(values));
  if (!g_grad_enabled) return out;
  bool any = std::any_of(parents.begin(), parents.end(),
                         [](const Tensor& p) { return p.requires_grad(); });
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(parents.size());
  for (auto& p : parents) out.node_->parents.push_back(p.node_);
  out.node_->backward_fn = std::move(backward);
  return out;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) {
    throw IndexError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(node_->shape));
  }
  return node_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t i) const { return node_->value.at(i); }

double Tensor::at(std::size_t i, std::size_t j) const {
  if (rank() != 2 || i >= dim(0) || j >= dim(1)) {
    throw IndexError("index (" + std::to_string(i) + "," + std::to_string(j) +
                     ") out of range for shape " + shape_str(shape()));
  }
  return node_->value[i * dim(1) + j];
}

Tensor& Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  if (!on) node_->grad.clear();
  return *this;
}

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw DimensionError("backward() needs a single-element tensor, got " + shape_str(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS; recurrent unrolls make the graph deep.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->value); }

Tensor Tensor::clone() const {
  Tensor t(node_->shape, node_->value);
  t.node_->requires_grad = node_->requires_grad;
  return t;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
          "matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  const double* A = a.values().data();
  const double* B = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* c = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
    }
  }
  return Tensor::from_op({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    const double* G = self.grad.data();
    const double* A = self.parents[0]->value.data();
    const double* B = self.parents[1]->value.data();
    if (double* dA = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* g = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = B + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[j] * brow[j];
          dA[i * k + p] += acc;
        }
      }
    }
    if (double* dB = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* g = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          if (av == 0.0) continue;
          double* drow = dB + p * n;
          for (std::size_t j = 0; j < n; ++j) drow[j] += av * g[j];
        }
      }
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(1),
          "matmul_nt: incompatible shapes " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  std::vector<double> out(m * n);
  const double* A = a.values().data();
  const double* B = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = A + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = B + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      out[i * n + j] = acc;
    }
  }
  return Tensor::from_op({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    const double* G = self.grad.data();
    const double* A = self.parents[0]->value.data();
    const double* B = self.parents[1]->value.data();
    double* dA = parent_grad(self, 0);
    double* dB = parent_grad(self, 1);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double g = G[i * n + j];
        if (g == 0.0) continue;
        if (dA) {
          double* da = dA + i * k;
          const double* brow = B + j * k;
          for (std::size_t p = 0; p < k; ++p) da[p] += g * brow[p];
        }
        if (dB) {
          double* db = dB + j * k;
          const double* arow = A + i * k;
          for (std::size_t p = 0; p < k; ++p) db[p] += g * arow[p];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require(a.rank() == 2, "transpose: expected rank 2, got " + shape_str(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  const auto v = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = v[i * n + j];
  return Tensor::from_op({n, m}, std::move(out), {a}, [m, n](detail::Node& self) {
    double* d = parent_grad(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i * n + j] += self.grad[j * m + i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  std::vector<double> out(x.numel());
  const auto v = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(v[i]);
  return Tensor::from_op(x.shape(), std::move(out), {x}, [deriv](detail::Node& self) {
    double* d = parent_grad(self, 0);
    const auto& in = self.parents[0]->value;
    for (std::size_t i = 0; i < in.size(); ++i) d[i] += self.grad[i] * deriv(in[i], self.value[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<double> out(a.numel());
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (double* d = parent_grad(self, p))
        for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  std::vector<double> out(a.numel());
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    if (double* d = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
    if (double* d = parent_grad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (double* d = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i] * bv[i];
    if (double* d = parent_grad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i] * av[i];
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  return Tensor::from_op(a.shape(), std::move(out), {a}, [factor](detail::Node& self) {
    double* d = parent_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i] * factor;
  });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require(a.rank() == 2 && bias.rank() == 1 && bias.dim(0) == a.dim(1),
          "add_bias: incompatible shapes " + shape_str(a.shape()) + " and " +
              shape_str(bias.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = bias.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  return Tensor::from_op(a.shape(), std::move(out), {a, bias}, [m, n](detail::Node& self) {
    if (double* d = parent_grad(self, 0))
      for (std::size_t i = 0; i < m * n; ++i) d[i] += self.grad[i];
    if (double* d = parent_grad(self, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) d[j] += self.grad[i * n + j];
  });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
}

// ---------------------------------------------------------------------------
// Normalizers and losses
// ---------------------------------------------------------------------------

namespace {

// Rows are the last axis; returns {rows, width}.
std::pair<std::size_t, std::size_t> last_axis_rows(const Tensor& x, const char* op) {
  if (x.rank() == 0 || x.shape().back() == 0) {
    throw DimensionError(std::string(op) + ": empty axis in shape " + shape_str(x.shape()));
  }
  const std::size_t w = x.shape().back();
  return {x.numel() / w, w};
}

}  // namespace

Tensor softmax(const Tensor& x) {
  auto [rows, w] = last_axis_rows(x, "softmax");
  std::vector<double> out(x.numel());
  const auto v = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = v.data() + r * w;
    double* o = out.data() + r * w;
    const double mx = *std::max_element(in, in + w);
    double z = 0.0;
    for (std::size_t j = 0; j < w; ++j) z += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < w; ++j) o[j] /= z;
  }
  return Tensor::from_op(x.shape(), std::move(out), {x}, [rows, w](detail::Node& self) {
    double* d = parent_grad(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * w;
      const double* g = self.grad.data() + r * w;
      double dot = 0.0;
      for (std::size_t j = 0; j < w; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < w; ++j) d[r * w + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor log_softmax(const Tensor& x) {
  auto [rows, w] = last_axis_rows(x, "log_softmax");
  std::vector<double> out(x.numel());
  const auto v = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = v.data() + r * w;
    const double mx = *std::max_element(in, in + w);
    double z = 0.0;
    for (std::size_t j = 0; j < w; ++j) z += std::exp(in[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < w; ++j) out[r * w + j] = in[j] - lse;
  }
  return Tensor::from_op(x.shape(), std::move(out), {x}, [rows, w](detail::Node& self) {
    double* d = parent_grad(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * w;
      const double* g = self.grad.data() + r * w;
      double gs = 0.0;
      for (std::size_t j = 0; j < w; ++j) gs += g[j];
      for (std::size_t j = 0; j < w; ++j) d[r * w + j] += g[j] - std::exp(y[j]) * gs;
    }
  });
}

Tensor masked_softmax(const Tensor& scores, std::span<const std::uint8_t> mask) {
  require(scores.rank() == 2, "masked_softmax: scores must be rank 2, got " + shape_str(scores.shape()));
  const std::size_t rows = scores.dim(0), w = scores.dim(1);
  const bool per_row = mask.size() == rows * w && rows != 1;
  require(mask.size() == w || per_row,
          "masked_softmax: scores " + shape_str(scores.shape()) + " vs mask of length " +
              std::to_string(mask.size()));
  std::vector<double> out(scores.numel(), 0.0);
  const auto v = scores.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = v.data() + r * w;
    const std::uint8_t* m = mask.data() + (per_row ? r * w : 0);
    double* o = out.data() + r * w;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < w; ++j)
      if (m[j]) mx = std::max(mx, in[j]);
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw DimensionError("masked_softmax: row " + std::to_string(r) + " has every key masked");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < w; ++j)
      if (m[j]) z += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < w; ++j) o[j] /= z;
  }
  return Tensor::from_op(scores.shape(), std::move(out), {scores}, [rows, w](detail::Node& self) {
    double* d = parent_grad(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * w;
      const double* g = self.grad.data() + r * w;
      double dot = 0.0;
      for (std::size_t j = 0; j < w; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < w; ++j) d[r * w + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: eps must be positive");
  auto [rows, w] = last_axis_rows(x, "layer_norm");
  require(gamma.rank() == 1 && gamma.dim(0) == w && beta.shape() == gamma.shape(),
          "layer_norm: x " + shape_str(x.shape()) + " vs gamma " + shape_str(gamma.shape()) +
              " / beta " + shape_str(beta.shape()));
  std::vector<double> out(x.numel());
  // Normalized values and inverse std are kept for the backward pass.
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  const auto v = x.values();
  const auto g = gamma.values(), b = beta.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = v.data() + r * w;
    double mu = 0.0;
    for (std::size_t j = 0; j < w; ++j) mu += in[j];
    mu /= static_cast<double>(w);
    double var = 0.0;
    for (std::size_t j = 0; j < w; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(w);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < w; ++j) {
      const double h = (in[j] - mu) * is;
      (*xhat)[r * w + j] = h;
      out[r * w + j] = g[j] * h + b[j];
    }
  }
  return Tensor::from_op(
      x.shape(), std::move(out), {x, gamma, beta}, [rows, w, xhat, inv_std](detail::Node& self) {
        const auto& gv = self.parents[1]->value;
        double* dx = parent_grad(self, 0);
        double* dg = parent_grad(self, 1);
        double* db = parent_grad(self, 2);
        const double inv_w = 1.0 / static_cast<double>(w);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* go = self.grad.data() + r * w;
          const double* h = xhat->data() + r * w;
          if (dg)
            for (std::size_t j = 0; j < w; ++j) dg[j] += go[j] * h[j];
          if (db)
            for (std::size_t j = 0; j < w; ++j) db[j] += go[j];
          if (dx) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < w; ++j) {
              const double dh = go[j] * gv[j];
              s1 += dh;
              s2 += dh * h[j];
            }
            const double is = (*inv_std)[r];
            for (std::size_t j = 0; j < w; ++j) {
              const double dh = go[j] * gv[j];
              dx[r * w + j] += is * (dh - inv_w * s1 - h[j] * inv_w * s2);
            }
          }
        }
      });
}

Tensor cross_entropy(const Tensor& logits, std::size_t target) {
  require(logits.rank() == 1, "cross_entropy: expected 1-D logits, got " + shape_str(logits.shape()));
  const std::size_t n = logits.dim(0);
  if (n == 0) throw DimensionError("cross_entropy: empty logits");
  if (target >= n) {
    throw IndexError("cross_entropy: target " + std::to_string(target) + " out of range for " +
                     std::to_string(n) + " classes");
  }
  const auto v = logits.values();
  const double mx = *std::max_element(v.begin(), v.end());
  double z = 0.0;
  for (double x : v) z += std::exp(x - mx);
  const double lse = mx + std::log(z);
  return Tensor::from_op({}, {lse - v[target]}, {logits}, [n, target, lse](detail::Node& self) {
    double* d = parent_grad(self, 0);
    const auto& in = self.parents[0]->value;
    const double g = self.grad[0];
    for (std::size_t j = 0; j < n; ++j) d[j] += g * std::exp(in[j] - lse);
    d[target] -= g;
  });
}

// ---------------------------------------------------------------------------
// Indexing and structure
// ---------------------------------------------------------------------------

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids) {
  require(table.rank() == 2, "embedding: table must be rank 2, got " + shape_str(table.shape()));
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<double> out(ids.size() * d);
  const auto tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw IndexError("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(vocab) + " rows");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  std::vector<std::int32_t> kept(ids.begin(), ids.end());
  return Tensor::from_op({ids.size(), d}, std::move(out), {table},
                         [kept = std::move(kept), d](detail::Node& self) {
                           double* dt = parent_grad(self, 0);
                           for (std::size_t i = 0; i < kept.size(); ++i) {
                             double* row = dt + static_cast<std::size_t>(kept[i]) * d;
                             const double* g = self.grad.data() + i * d;
                             for (std::size_t j = 0; j < d; ++j) row[j] += g[j];
                           }
                         });
}

Tensor dropout(const Tensor& x, double rate, bool train, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
  if (!train || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = keep(rng) ? keep_scale : 0.0;
  std::vector<double> out(x.numel());
  const auto v = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] * mask[i];
  return Tensor::from_op(x.shape(), std::move(out), {x},
                         [mask = std::move(mask)](detail::Node& self) {
                           double* d = parent_grad(self, 0);
                           for (std::size_t i = 0; i < mask.size(); ++i)
                             d[i] += self.grad[i] * mask[i];
                         });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const std::size_t r = parts[0].rank();
  require((r == 1 && axis == 0) || (r == 2 && axis < 2),
          "concat: unsupported axis " + std::to_string(axis) + " for shape " +
              shape_str(parts[0].shape()));
  if (r == 1 || axis == 0) {
    // Row-major: concatenating along the leading axis is a flat append.
    Shape shape = parts[0].shape();
    shape[0] = 0;
    std::vector<double> out;
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
      require(p.rank() == r && (r == 1 || p.dim(1) == parts[0].dim(1)),
              "concat: shape mismatch " + shape_str(parts[0].shape()) + " vs " +
                  shape_str(p.shape()));
      offsets.push_back(out.size());
      shape[0] += p.dim(0);
      out.insert(out.end(), p.values().begin(), p.values().end());
    }
    return Tensor::from_op(std::move(shape), std::move(out), parts,
                           [offsets = std::move(offsets)](detail::Node& self) {
                             for (std::size_t k = 0; k < offsets.size(); ++k) {
                               double* d = parent_grad(self, k);
                               if (!d) continue;
                               const std::size_t len = self.parents[k]->value.size();
                               for (std::size_t i = 0; i < len; ++i)
                                 d[i] += self.grad[offsets[k] + i];
                             }
                           });
  }
  const std::size_t rows = parts[0].dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require(p.rank() == 2 && p.dim(0) == rows,
            "concat: shape mismatch " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(rows * total);
  std::size_t col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].values();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(v.data() + i * widths[k], widths[k], out.data() + i * total + col);
    col += widths[k];
  }
  return Tensor::from_op({rows, total}, std::move(out), parts,
                         [widths = std::move(widths), rows, total](detail::Node& self) {
                           std::size_t col = 0;
                           for (std::size_t k = 0; k < widths.size(); ++k) {
                             if (double* d = parent_grad(self, k)) {
                               for (std::size_t i = 0; i < rows; ++i)
                                 for (std::size_t j = 0; j < widths[k]; ++j)
                                   d[i * widths[k] + j] += self.grad[i * total + col + j];
                             }
                             col += widths[k];
                           }
                         });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  require(x.rank() >= 1 && x.rank() <= 2 && axis < x.rank(),
          "slice: unsupported axis " + std::to_string(axis) + " for shape " + shape_str(x.shape()));
  if (begin > end || end > x.dim(axis)) {
    throw IndexError("slice: [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for axis " + std::to_string(axis) + " of " +
                     shape_str(x.shape()));
  }
  const std::size_t rows = x.rank() == 1 ? 1 : x.dim(0);
  const std::size_t width = x.rank() == 1 ? x.dim(0) : x.dim(1);
  // Normalize to a (row range, column range) view of a 2-D buffer.
  std::size_t r0 = 0, r1 = rows, c0 = 0, c1 = width;
  if (x.rank() == 2 && axis == 0) {
    r0 = begin;
    r1 = end;
  } else {
    c0 = begin;
    c1 = end;
  }
  Shape shape = x.shape();
  shape[axis] = end - begin;
  const std::size_t w = c1 - c0;
  std::vector<double> out((r1 - r0) * w);
  const auto v = x.values();
  for (std::size_t i = r0; i < r1; ++i)
    std::copy_n(v.data() + i * width + c0, w, out.data() + (i - r0) * w);
  return Tensor::from_op(std::move(shape), std::move(out), {x},
                         [r0, r1, c0, w, width](detail::Node& self) {
                           double* d = parent_grad(self, 0);
                           for (std::size_t i = r0; i < r1; ++i)
                             for (std::size_t j = 0; j < w; ++j)
                               d[i * width + c0 + j] += self.grad[(i - r0) * w + j];
                         });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return Tensor::from_op(std::move(shape), std::move(out), {x}, [](detail::Node& self) {
    double* d = parent_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return Tensor::from_op({}, {s}, {x}, [](detail::Node& self) {
    double* d = parent_grad(self, 0);
    const std::size_t n = self.parents[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) d[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

}  // namespace disaqa
