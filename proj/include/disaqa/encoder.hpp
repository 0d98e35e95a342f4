// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "disaqa/forward_context.hpp"
#include "disaqa/grad_check.hpp"
#include "disaqa/lora.hpp"
#include "disaqa/tensor.hpp"
#include "disaqa/tokenizer.hpp"

namespace disaqa {

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ffn = 256;
  std::size_t max_position = 384;
  double dropout_rate = 0.1;
  double layer_norm_eps = 1e-12;

  std::size_t head_dim() const { return d_model / n_heads; }
  void validate() const;

  // 2 layers, d=64, 4 heads.
  static EncoderConfig toy(std::size_t vocab_size);
  // BERT-base shape: 12 layers, d=768, 12 heads, 32768-entry vocabulary.
  static EncoderConfig paper_scale();
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

// Linear weights are stored [out, in] and applied as x W^T + b.
struct EncoderLayerWeights {
  Tensor q_weight, q_bias;
  Tensor k_weight, k_bias;
  Tensor v_weight, v_bias;
  Tensor o_weight, o_bias;
  Tensor attn_ln_gamma, attn_ln_beta;
  Tensor ffn_in_weight, ffn_in_bias;
  Tensor ffn_out_weight, ffn_out_bias;
  Tensor ffn_ln_gamma, ffn_ln_beta;
};

struct EncoderWeights {
  Tensor token_embedding;
  Tensor position_embedding;
  Tensor segment_embedding;
  Tensor embedding_ln_gamma, embedding_ln_beta;
  std::vector<EncoderLayerWeights> layers;

  // N(0, 0.02) matrices and embeddings, zero biases, unit layer-norm gains.
  static EncoderWeights init(const EncoderConfig& cfg, Rng& rng);

  // Stable order; names are "encoder.*".
  std::vector<NamedTensor> named() const;
};

std::vector<ParamEntry> encoder_layout(const EncoderConfig& cfg);

// Adapters on the query and value projections of one layer.
struct LayerAdapters {
  LoRAAdapter query;
  LoRAAdapter value;
};

// Scaled dot-product attention over n_heads heads. `mask` is a key mask of
// length L or a full [L,L] mask (row = query). When `probs` is non-null it
// receives each head's [L,L] attention matrix.
Tensor multi_head_attention(const Tensor& h, const EncoderLayerWeights& w, std::size_t n_heads,
                            std::span<const std::uint8_t> mask, const LayerAdapters* adapters,
                            const ForwardContext& ctx, double attn_dropout = 0.0,
                            std::vector<Tensor>* probs = nullptr);

// Token + position + segment embeddings followed by the post-norm layer
// stack. Padding keys are masked, so real positions do not depend on
// padding. `adapters` is empty or holds one entry per layer.
Tensor encode(const PackedInput& packed, const EncoderConfig& cfg, const EncoderWeights& w,
              std::span<const LayerAdapters> adapters, const ForwardContext& ctx);

}  // namespace disaqa
