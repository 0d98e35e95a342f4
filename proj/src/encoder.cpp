// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#include "disaqa/encoder.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace disaqa {

void EncoderConfig::validate() const {
  if (vocab_size < 1 || d_model < 1 || n_layers < 1 || n_heads < 1 || d_ffn < 1 || max_position < 1) {
    throw std::invalid_argument("encoder config: all sizes must be >= 1");
  }
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("encoder config: d_model " + std::to_string(d_model) +
                                " is not divisible by n_heads " + std::to_string(n_heads));
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw std::invalid_argument("encoder config: dropout_rate must be in [0,1)");
  }
}

EncoderConfig EncoderConfig::toy(std::size_t vocab_size) {
  EncoderConfig c;
  c.vocab_size = vocab_size;
  return c;
}

EncoderConfig EncoderConfig::paper_scale() {
  EncoderConfig c;
  c.vocab_size = 32768;
  c.d_model = 768;
  c.n_layers = 12;
  c.n_heads = 12;
  c.d_ffn = 3072;
  c.max_position = 512;
  return c;
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"vocab_size", c.vocab_size},     {"d_model", c.d_model},
       {"n_layers", c.n_layers},         {"n_heads", c.n_heads},
       {"d_ffn", c.d_ffn},               {"max_position", c.max_position},
       {"dropout_rate", c.dropout_rate}, {"layer_norm_eps", c.layer_norm_eps}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.d_ffn = j.at("d_ffn").get<std::size_t>();
  c.max_position = j.at("max_position").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.layer_norm_eps = j.value("layer_norm_eps", 1e-12);
  c.validate();
}

namespace {

constexpr double kInitStd = 0.02;

Tensor ones(std::size_t n) { return Tensor({n}, 1.0); }
Tensor zeros(std::size_t n) { return Tensor({n}, 0.0); }

// Visits every encoder tensor slot with its name and shape, in a fixed order.
template <class Fn>
void for_each_slot(const EncoderConfig& cfg, Fn&& fn) {
  const std::size_t d = cfg.d_model, f = cfg.d_ffn;
  fn("encoder.embeddings.token", Shape{cfg.vocab_size, d}, 'w');
  fn("encoder.embeddings.position", Shape{cfg.max_position, d}, 'w');
  fn("encoder.embeddings.segment", Shape{2, d}, 'w');
  fn("encoder.embeddings.ln.gamma", Shape{d}, 'g');
  fn("encoder.embeddings.ln.beta", Shape{d}, 'b');
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "encoder.layer." + std::to_string(l) + ".";
    for (const char* m : {"q", "k", "v", "o"}) {
      fn(p + "attn." + m + ".weight", Shape{d, d}, 'w');
      fn(p + "attn." + m + ".bias", Shape{d}, 'b');
    }
    fn(p + "attn.ln.gamma", Shape{d}, 'g');
    fn(p + "attn.ln.beta", Shape{d}, 'b');
    fn(p + "ffn.in.weight", Shape{f, d}, 'w');
    fn(p + "ffn.in.bias", Shape{f}, 'b');
    fn(p + "ffn.out.weight", Shape{d, f}, 'w');
    fn(p + "ffn.out.bias", Shape{d}, 'b');
    fn(p + "ffn.ln.gamma", Shape{d}, 'g');
    fn(p + "ffn.ln.beta", Shape{d}, 'b');
  }
}

template <class W>
auto slots(W& w) {
  using Ptr = std::conditional_t<std::is_const_v<W>, const Tensor*, Tensor*>;
  std::vector<Ptr> out = {&w.token_embedding, &w.position_embedding, &w.segment_embedding,
                              &w.embedding_ln_gamma, &w.embedding_ln_beta};
  for (auto& l : w.layers) {
    for (Ptr t : {&l.q_weight, &l.q_bias, &l.k_weight, &l.k_bias, &l.v_weight, &l.v_bias,
                      &l.o_weight, &l.o_bias, &l.attn_ln_gamma, &l.attn_ln_beta, &l.ffn_in_weight,
                      &l.ffn_in_bias, &l.ffn_out_weight, &l.ffn_out_bias, &l.ffn_ln_gamma,
                      &l.ffn_ln_beta})
      out.push_back(t);
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_bias(matmul_nt(x, w), b);
}

Tensor projection(const Tensor& x, const Tensor& w, const Tensor& b, const LoRAAdapter* ad,
                  const ForwardContext& ctx) {
  if (!ad) return linear(x, w, b);
  // Full fine-tuning keeps the adapters but lets the base train as well.
  if (w.requires_grad()) return add(linear(x, w, b), lora_delta(x, *ad, ctx));
  return add_bias(lora_forward(x, w, *ad, ctx), b);
}

}  // namespace

EncoderWeights EncoderWeights::init(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  EncoderWeights w;
  w.layers.resize(cfg.n_layers);
  auto targets = slots(w);
  std::size_t i = 0;
  for_each_slot(cfg, [&](const std::string&, const Shape& shape, char kind) {
    Tensor& t = *targets[i++];
    if (kind == 'w') {
      t = Tensor::randn(shape, kInitStd, rng);
    } else {
      t = kind == 'g' ? ones(shape[0]) : zeros(shape[0]);
    }
  });
  return w;
}

std::vector<NamedTensor> EncoderWeights::named() const {
  auto targets = slots(*this);
  std::vector<NamedTensor> out;
  // Only the layer count matters for names.
  EncoderConfig cfg;
  cfg.n_layers = layers.size();
  std::size_t i = 0;
  for_each_slot(cfg, [&](const std::string& name, const Shape&, char) {
    out.emplace_back(name, *targets[i++]);
  });
  return out;
}

std::vector<ParamEntry> encoder_layout(const EncoderConfig& cfg) {
  std::vector<ParamEntry> out;
  for_each_slot(cfg, [&](const std::string& name, const Shape& shape, char) {
    out.push_back({name, shape, ParamGroup::encoder});
  });
  return out;
}

Tensor multi_head_attention(const Tensor& h, const EncoderLayerWeights& w, std::size_t n_heads,
                            std::span<const std::uint8_t> mask, const LayerAdapters* adapters,
                            const ForwardContext& ctx, double attn_dropout,
                            std::vector<Tensor>* probs) {
  const std::size_t L = h.dim(0), d = h.dim(1);
  if (n_heads == 0 || d % n_heads != 0) {
    throw DimensionError("attention: width " + std::to_string(d) + " not divisible into " +
                         std::to_string(n_heads) + " heads");
  }
  if (mask.size() != L && mask.size() != L * L) {
    throw DimensionError("attention: mask of length " + std::to_string(mask.size()) +
                         " for sequence of length " + std::to_string(L));
  }
  const std::size_t dh = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor q = projection(h, w.q_weight, w.q_bias, adapters ? &adapters->query : nullptr, ctx);
  Tensor k = linear(h, w.k_weight, w.k_bias);
  Tensor v = projection(h, w.v_weight, w.v_bias, adapters ? &adapters->value : nullptr, ctx);

  std::vector<Tensor> heads;
  heads.reserve(n_heads);
  for (std::size_t hd = 0; hd < n_heads; ++hd) {
    const std::size_t c0 = hd * dh, c1 = c0 + dh;
    Tensor qh = n_heads == 1 ? q : slice(q, 1, c0, c1);
    Tensor kh = n_heads == 1 ? k : slice(k, 1, c0, c1);
    Tensor vh = n_heads == 1 ? v : slice(v, 1, c0, c1);
    Tensor p = masked_softmax(scale(matmul_nt(qh, kh), inv_sqrt), mask);
    if (probs) probs->push_back(p);
    p = maybe_dropout(p, attn_dropout, ctx);
    heads.push_back(matmul(p, vh));
  }
  Tensor merged = n_heads == 1 ? heads[0] : concat(heads, 1);
  return linear(merged, w.o_weight, w.o_bias);
}

Tensor encode(const PackedInput& packed, const EncoderConfig& cfg, const EncoderWeights& w,
              std::span<const LayerAdapters> adapters, const ForwardContext& ctx) {
  const std::size_t L = packed.length();
  if (L == 0) throw DimensionError("encode: empty input");
  if (L > cfg.max_position) {
    throw IndexError("encode: sequence length " + std::to_string(L) + " exceeds max_position " +
                     std::to_string(cfg.max_position));
  }
  if (!adapters.empty() && adapters.size() != w.layers.size()) {
    throw DimensionError("encode: " + std::to_string(adapters.size()) + " adapter sets for " +
                         std::to_string(w.layers.size()) + " layers");
  }
  std::vector<std::int32_t> positions(L);
  std::iota(positions.begin(), positions.end(), 0);

  Tensor x = add(add(embedding(w.token_embedding, packed.token_ids),
                     embedding(w.position_embedding, positions)),
                 embedding(w.segment_embedding, packed.segment_ids));
  x = layer_norm(x, w.embedding_ln_gamma, w.embedding_ln_beta, cfg.layer_norm_eps);
  x = maybe_dropout(x, cfg.dropout_rate, ctx);

  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const auto& lw = w.layers[l];
    const LayerAdapters* ad = adapters.empty() ? nullptr : &adapters[l];
    Tensor attn = multi_head_attention(x, lw, cfg.n_heads, packed.attention_mask, ad, ctx,
                                       cfg.dropout_rate);
    attn = maybe_dropout(attn, cfg.dropout_rate, ctx);
    x = layer_norm(add(x, attn), lw.attn_ln_gamma, lw.attn_ln_beta, cfg.layer_norm_eps);

    Tensor ffn = linear(gelu(linear(x, lw.ffn_in_weight, lw.ffn_in_bias)), lw.ffn_out_weight,
                        lw.ffn_out_bias);
    ffn = maybe_dropout(ffn, cfg.dropout_rate, ctx);
    x = layer_norm(add(x, ffn), lw.ffn_ln_gamma, lw.ffn_ln_beta, cfg.layer_norm_eps);
  }
  return x;
}

}  // namespace disaqa
