// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#include "disaqa/qa_head.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace disaqa {

void to_json(nlohmann::json& j, const HeadConfig& c) {
  j = {{"lstm_hidden", c.lstm_hidden},
       {"end_weight", c.end_weight},
       {"max_answer_len", c.max_answer_len}};
}

void from_json(const nlohmann::json& j, HeadConfig& c) {
  c.lstm_hidden = j.at("lstm_hidden").get<std::size_t>();
  c.end_weight = j.at("end_weight").get<double>();
  c.max_answer_len = j.at("max_answer_len").get<std::size_t>();
  if (!(c.end_weight > 0.0)) throw std::invalid_argument("head config: end_weight must be > 0");
  if (c.max_answer_len == 0) throw std::invalid_argument("head config: max_answer_len must be >= 1");
}

namespace {

LstmCellWeights make_cell(std::size_t d_in, std::size_t hidden, Rng* rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  LstmCellWeights c;
  if (rng) {
    c.w_ih = Tensor::uniform({4 * hidden, d_in}, bound, *rng);
    c.w_hh = Tensor::uniform({4 * hidden, hidden}, bound, *rng);
    c.bias = Tensor::uniform({4 * hidden}, bound, *rng);
    // Forget gate starts near 0.73 so state survives long contexts.
    for (std::size_t k = hidden; k < 2 * hidden; ++k) c.bias.values()[k] += 1.0;
  } else {
    c.w_ih = Tensor({4 * hidden, d_in});
    c.w_hh = Tensor({4 * hidden, hidden});
    c.bias = Tensor({4 * hidden});
  }
  return c;
}

PositionHead make_head(std::size_t d, Rng& rng) {
  const double b1 = 1.0 / std::sqrt(static_cast<double>(3 * d));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(d));
  return {Tensor::uniform({d, 3 * d}, b1, rng), Tensor::uniform({d}, b1, rng),
          Tensor::uniform({1, d}, b2, rng), Tensor::uniform({1}, b2, rng)};
}

void add_cell(std::vector<NamedTensor>& out, const std::string& p, const LstmCellWeights& c) {
  out.emplace_back(p + ".w_ih", c.w_ih);
  out.emplace_back(p + ".w_hh", c.w_hh);
  out.emplace_back(p + ".bias", c.bias);
}

void add_head(std::vector<NamedTensor>& out, const std::string& p, const PositionHead& h) {
  out.emplace_back(p + ".hidden.weight", h.hidden_weight);
  out.emplace_back(p + ".hidden.bias", h.hidden_bias);
  out.emplace_back(p + ".out.weight", h.out_weight);
  out.emplace_back(p + ".out.bias", h.out_bias);
}

// Runs one direction; returns hidden states in natural time order, [L, H].
Tensor run_direction(const Tensor& x, const LstmCellWeights& c, bool reverse) {
  const std::size_t L = x.dim(0);
  const std::size_t H = c.w_hh.dim(1);
  Tensor gates_in = add_bias(matmul_nt(x, c.w_ih), c.bias);
  std::vector<Tensor> states(L);
  Tensor h, cell;
  for (std::size_t step = 0; step < L; ++step) {
    const std::size_t t = reverse ? L - 1 - step : step;
    Tensor gates = slice(gates_in, 0, t, t + 1);
    if (h.defined()) gates = add(gates, matmul_nt(h, c.w_hh));
    Tensor i = sigmoid(slice(gates, 1, 0, H));
    Tensor f = sigmoid(slice(gates, 1, H, 2 * H));
    Tensor g = tanh(slice(gates, 1, 2 * H, 3 * H));
    Tensor o = sigmoid(slice(gates, 1, 3 * H, 4 * H));
    cell = cell.defined() ? add(mul(f, cell), mul(i, g)) : mul(i, g);
    h = mul(o, tanh(cell));
    states[t] = h;
  }
  return concat(states, 0);
}

Tensor window_features(const Tensor& h) {
  const std::size_t L = h.dim(0), d = h.dim(1);
  Tensor pad({1, d}, 0.0);
  if (L == 1) return concat({pad, h, pad}, 1);
  Tensor prev = concat({pad, slice(h, 0, 0, L - 1)}, 0);
  Tensor next = concat({slice(h, 0, 1, L), pad}, 0);
  return concat({prev, h, next}, 1);
}

Tensor score(const Tensor& window, const PositionHead& head) {
  Tensor hidden = tanh(add_bias(matmul_nt(window, head.hidden_weight), head.hidden_bias));
  Tensor out = add_bias(matmul_nt(hidden, head.out_weight), head.out_bias);
  return reshape(out, {window.dim(0)});
}

std::vector<double> zone_log_softmax(std::span<const double> logits, TokenRange zone) {
  std::vector<double> out(logits.begin() + static_cast<std::ptrdiff_t>(zone.begin),
                          logits.begin() + static_cast<std::ptrdiff_t>(zone.end));
  const double mx = *std::max_element(out.begin(), out.end());
  double z = 0.0;
  for (double v : out) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  for (double& v : out) v -= lse;
  return out;
}

}  // namespace

BiLSTMWeights BiLSTMWeights::init(std::size_t d_model, std::size_t hidden, Rng& rng) {
  BiLSTMWeights w;
  w.forward = make_cell(d_model, hidden, &rng);
  w.backward = make_cell(d_model, hidden, &rng);
  if (2 * hidden != d_model) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(2 * hidden));
    w.proj_weight = Tensor::uniform({d_model, 2 * hidden}, bound, rng);
    w.proj_bias = Tensor({d_model}, 0.0);
  }
  return w;
}

BiLSTMWeights BiLSTMWeights::zeros(std::size_t d_model, std::size_t hidden) {
  BiLSTMWeights w;
  w.forward = make_cell(d_model, hidden, nullptr);
  w.backward = make_cell(d_model, hidden, nullptr);
  if (2 * hidden != d_model) {
    w.proj_weight = Tensor({d_model, 2 * hidden}, 0.0);
    w.proj_bias = Tensor({d_model}, 0.0);
  }
  return w;
}

std::vector<NamedTensor> BiLSTMWeights::named() const {
  std::vector<NamedTensor> out;
  add_cell(out, "bilstm.fwd", forward);
  add_cell(out, "bilstm.bwd", backward);
  if (proj_weight.defined()) {
    out.emplace_back("bilstm.proj.weight", proj_weight);
    out.emplace_back("bilstm.proj.bias", proj_bias);
  }
  return out;
}

PositionHeadWeights PositionHeadWeights::init(std::size_t d_model, Rng& rng) {
  PositionHeadWeights w;
  w.start = make_head(d_model, rng);
  w.end = make_head(d_model, rng);
  return w;
}

std::vector<NamedTensor> PositionHeadWeights::named() const {
  std::vector<NamedTensor> out;
  add_head(out, "head.start", start);
  add_head(out, "head.end", end);
  return out;
}

std::vector<ParamEntry> head_layout(std::size_t d, const HeadConfig& cfg) {
  const std::size_t H = cfg.resolved_hidden(d);
  std::vector<ParamEntry> out;
  for (const char* dir : {"fwd", "bwd"}) {
    const std::string p = std::string("bilstm.") + dir;
    out.push_back({p + ".w_ih", {4 * H, d}, ParamGroup::bilstm});
    out.push_back({p + ".w_hh", {4 * H, H}, ParamGroup::bilstm});
    out.push_back({p + ".bias", {4 * H}, ParamGroup::bilstm});
  }
  if (2 * H != d) {
    out.push_back({"bilstm.proj.weight", {d, 2 * H}, ParamGroup::bilstm});
    out.push_back({"bilstm.proj.bias", {d}, ParamGroup::bilstm});
  }
  for (const char* which : {"start", "end"}) {
    const std::string p = std::string("head.") + which;
    out.push_back({p + ".hidden.weight", {d, 3 * d}, ParamGroup::head});
    out.push_back({p + ".hidden.bias", {d}, ParamGroup::head});
    out.push_back({p + ".out.weight", {1, d}, ParamGroup::head});
    out.push_back({p + ".out.bias", {1}, ParamGroup::head});
  }
  return out;
}

Tensor bilstm_encode(const Tensor& h_bert, const BiLSTMWeights& w) {
  if (h_bert.rank() != 2 || h_bert.dim(0) == 0) {
    throw DimensionError("bilstm_encode: expected non-empty [L,d], got " + shape_str(h_bert.shape()));
  }
  if (w.forward.w_ih.dim(1) != h_bert.dim(1)) {
    throw DimensionError("bilstm_encode: input " + shape_str(h_bert.shape()) +
                         " vs input weights " + shape_str(w.forward.w_ih.shape()));
  }
  Tensor both = concat({run_direction(h_bert, w.forward, false),
                        run_direction(h_bert, w.backward, true)},
                       1);
  if (w.proj_weight.defined()) both = add_bias(matmul_nt(both, w.proj_weight), w.proj_bias);
  return add(h_bert, both);
}

PositionLogits position_logits(const Tensor& h, const PositionHeadWeights& w) {
  if (h.rank() != 2 || h.dim(0) == 0) {
    throw DimensionError("position_logits: expected non-empty [L,d], got " + shape_str(h.shape()));
  }
  Tensor window = window_features(h);
  return {score(window, w.start), score(window, w.end)};
}

Tensor qa_loss(const Tensor& start_logits, const Tensor& end_logits, TokenSpan truth,
               TokenRange context, double end_weight) {
  if (start_logits.shape() != end_logits.shape() || start_logits.rank() != 1) {
    throw DimensionError("qa_loss: logits " + shape_str(start_logits.shape()) + " vs " +
                         shape_str(end_logits.shape()));
  }
  if (context.empty() || context.end > start_logits.dim(0)) {
    throw IndexError("qa_loss: context zone does not fit the logits");
  }
  if (!context.contains(truth.start) || !context.contains(truth.end)) {
    throw IndexError("qa_loss: gold span (" + std::to_string(truth.start) + "," +
                     std::to_string(truth.end) + ") outside context zone [" +
                     std::to_string(context.begin) + "," + std::to_string(context.end) + ")");
  }
  Tensor s = slice(start_logits, 0, context.begin, context.end);
  Tensor e = slice(end_logits, 0, context.begin, context.end);
  return add(cross_entropy(s, truth.start - context.begin),
             scale(cross_entropy(e, truth.end - context.begin), end_weight));
}

SpanPrediction decode_span(std::span<const double> start_logits, std::span<const double> end_logits,
                           TokenRange context, std::size_t max_answer_len) {
  if (context.empty()) throw IndexError("decode_span: empty context zone");
  if (context.end > start_logits.size() || context.end > end_logits.size()) {
    throw IndexError("decode_span: context zone does not fit the logits");
  }
  if (max_answer_len == 0) throw std::invalid_argument("decode_span: max_answer_len must be >= 1");
  const auto ls = zone_log_softmax(start_logits, context);
  const auto le = zone_log_softmax(end_logits, context);
  const std::size_t n = context.size();
  // Ranking by raw logit sums gives the same argmax (the normalizers are
  // constant) and keeps exact ties exact, so the smallest (s, e) wins.
  const double* st = start_logits.data() + context.begin;
  const double* en = end_logits.data() + context.begin;
  double best_raw = -std::numeric_limits<double>::infinity();
  std::size_t bs = 0, be = 0;
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t last = std::min(n - 1, s + max_answer_len - 1);
    for (std::size_t e = s; e <= last; ++e) {
      const double v = st[s] + en[e];
      if (v > best_raw) {
        best_raw = v;
        bs = s;
        be = e;
      }
    }
  }
  return {context.begin + bs, context.begin + be, ls[bs] + le[be]};
}

}  // namespace disaqa
