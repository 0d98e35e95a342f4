// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "disaqa/grad_check.hpp"
#include "disaqa/lora.hpp"
#include "disaqa/tensor.hpp"
#include "disaqa/tokenizer.hpp"

namespace disaqa {

struct HeadConfig {
  // Per-direction LSTM width; 0 means d_model / 2 so [fwd; bwd] adds onto
  // the encoder states directly. Any other width adds a linear projection.
  std::size_t lstm_hidden = 0;
  double end_weight = 3.0;
  std::size_t max_answer_len = 64;

  std::size_t resolved_hidden(std::size_t d_model) const {
    return lstm_hidden ? lstm_hidden : d_model / 2;
  }
};

void to_json(nlohmann::json& j, const HeadConfig& c);
void from_json(const nlohmann::json& j, HeadConfig& c);

// Gate rows are stacked in the order input, forget, cell, output.
struct LstmCellWeights {
  Tensor w_ih;  // [4H, d_in]
  Tensor w_hh;  // [4H, H]
  Tensor bias;  // [4H]
};

struct BiLSTMWeights {
  LstmCellWeights forward;
  LstmCellWeights backward;
  // Present only when 2H != d_model.
  Tensor proj_weight;  // [d_model, 2H]
  Tensor proj_bias;    // [d_model]

  std::size_t hidden() const { return forward.w_hh.dim(1); }

  // Uniform(+-1/sqrt(H)) gates.
  static BiLSTMWeights init(std::size_t d_model, std::size_t hidden, Rng& rng);
  // All weights and biases zero.
  static BiLSTMWeights zeros(std::size_t d_model, std::size_t hidden);
  std::vector<NamedTensor> named() const;
};

// Window scorer: concat(h[i-1], h[i], h[i+1]) -> tanh layer -> scalar.
struct PositionHead {
  Tensor hidden_weight;  // [d, 3d]
  Tensor hidden_bias;    // [d]
  Tensor out_weight;     // [1, d]
  Tensor out_bias;       // [1]
};

struct PositionHeadWeights {
  PositionHead start;
  PositionHead end;

  static PositionHeadWeights init(std::size_t d_model, Rng& rng);
  std::vector<NamedTensor> named() const;
};

std::vector<ParamEntry> head_layout(std::size_t d_model, const HeadConfig& cfg);

struct SpanPrediction {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
  double score = 0.0;   // log P_start(start) + log P_end(end)
};

// Forward and backward LSTM over the rows of h_bert, concatenated per
// position, plus the residual: returns h_bert + [fwd; bwd] (projected when
// the widths differ).
Tensor bilstm_encode(const Tensor& h_bert, const BiLSTMWeights& w);

struct PositionLogits {
  Tensor start;  // [L]
  Tensor end;    // [L]
};

// Boundary windows are zero-padded.
PositionLogits position_logits(const Tensor& h, const PositionHeadWeights& w);

// cross_entropy(start | context) + end_weight * cross_entropy(end | context),
// both softmaxes restricted to the context zone. Throws IndexError when a
// gold index falls outside the zone.
Tensor qa_loss(const Tensor& start_logits, const Tensor& end_logits, TokenSpan truth,
               TokenRange context, double end_weight);

// Best (s, e) with s <= e <= s + max_answer_len - 1 inside the context zone
// under log-softmax scores over the zone; ties go to the smallest s, then
// the smallest e.
SpanPrediction decode_span(std::span<const double> start_logits, std::span<const double> end_logits,
                           TokenRange context, std::size_t max_answer_len);

}  // namespace disaqa
