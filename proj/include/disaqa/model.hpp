// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "disaqa/encoder.hpp"
#include "disaqa/forward_context.hpp"
#include "disaqa/lora.hpp"
#include "disaqa/qa_head.hpp"
#include "disaqa/tokenizer.hpp"

namespace disaqa {

struct ModelConfig {
  EncoderConfig encoder;
  LoraConfig lora;
  HeadConfig head;

  // Toy preset: EncoderConfig::toy with dropout disabled.
  static ModelConfig toy(std::size_t vocab_size);
  static ModelConfig paper_scale();
  static ModelConfig preset(const std::string& name, std::size_t vocab_size);
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

ParamGroup param_group(const std::string& name);

// Encoder -> residual Bi-LSTM -> start/end window heads, with LoRA adapters
// on every layer's query and value projections.
class QAModel {
 public:
  static QAModel init(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  EncoderWeights& encoder() { return encoder_; }
  const EncoderWeights& encoder() const { return encoder_; }
  std::vector<LayerAdapters>& adapters() { return adapters_; }
  const std::vector<LayerAdapters>& adapters() const { return adapters_; }
  BiLSTMWeights& bilstm() { return bilstm_; }
  const BiLSTMWeights& bilstm() const { return bilstm_; }
  PositionHeadWeights& heads() { return heads_; }
  const PositionHeadWeights& heads() const { return heads_; }

  // Checkpoint order: encoder.*, lora.{layer}.{q|v}.{A|B}, bilstm.*, head.*
  std::vector<NamedTensor> named_parameters() const;
  std::vector<NamedTensor> trainable_parameters() const;

  TrainMode train_mode() const { return mode_; }
  void set_train_mode(TrainMode mode);

  // Runs on the real (unpadded) prefix only; logits have real_length() entries.
  PositionLogits forward(const PackedInput& packed, const ForwardContext& ctx) const;
  Tensor encode_states(const PackedInput& packed, const ForwardContext& ctx) const;
  Tensor loss(const PackedInput& packed, TokenSpan gold, const ForwardContext& ctx) const;
  SpanPrediction predict(const PackedInput& packed) const;

  QAModel clone() const;
  // Copy with every adapter folded into its base matrix and removed.
  QAModel merged() const;

  // Replaces values of tensors found by name; returns how many matched.
  // Throws DimensionError on a shape mismatch.
  std::size_t load_tensors(const std::vector<NamedTensor>& tensors);

 private:
  ModelConfig cfg_;
  EncoderWeights encoder_;
  std::vector<LayerAdapters> adapters_;
  BiLSTMWeights bilstm_;
  PositionHeadWeights heads_;
  TrainMode mode_ = TrainMode::lora;
};

std::vector<ParamEntry> model_layout(const ModelConfig& cfg);

// Counts the model's actual tensors, classified by group under `mode`.
ParamBudget count_params(const QAModel& model, TrainMode mode);

}  // namespace disaqa
