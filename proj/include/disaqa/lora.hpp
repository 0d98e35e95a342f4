// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "disaqa/forward_context.hpp"
#include "disaqa/tensor.hpp"

namespace disaqa {

struct LoraConfig {
  std::size_t rank = 4;
  double alpha = 32.0;
  double dropout_rate = 0.1;

  double scaling() const { return alpha / static_cast<double>(rank); }
};

void to_json(nlohmann::json& j, const LoraConfig& c);
void from_json(const nlohmann::json& j, LoraConfig& c);

// Low-rank update for a frozen base matrix W0 of shape [d, k]:
//   W = W0 + (alpha / r) * B A,   B: [d, r], A: [r, k].
struct LoRAAdapter {
  Tensor a;
  Tensor b;
  std::size_t rank = 0;
  double alpha = 1.0;
  double dropout_rate = 0.0;
  std::string target_id;

  double scaling() const { return alpha / static_cast<double>(rank); }
  std::size_t out_features() const { return b.dim(0); }
  std::size_t in_features() const { return a.dim(1); }

  // A ~ N(0, 0.02), B = 0, so the adapter starts as an exact no-op.
  static LoRAAdapter init(std::size_t out_features, std::size_t in_features, const LoraConfig& cfg,
                          std::string target_id, Rng& rng);
  LoRAAdapter clone() const;
};

// Rows of x are inputs: returns x W0^T + s * (dropout(x) A^T) B^T, the row
// form of W0 x + s B A dropout(x). base_w must not require gradients.
Tensor lora_forward(const Tensor& x, const Tensor& base_w, const LoRAAdapter& adapter,
                    const ForwardContext& ctx);

// Just the adapter term s * (dropout(x) A^T) B^T.
Tensor lora_delta(const Tensor& x, const LoRAAdapter& adapter, const ForwardContext& ctx);

// W0 + (alpha / r) B A as a new frozen tensor.
Tensor merge(const Tensor& base_w, const LoRAAdapter& adapter);

// ---------------------------------------------------------------------------
// Parameter accounting
// ---------------------------------------------------------------------------

enum class TrainMode { lora, full };

TrainMode parse_train_mode(const std::string& s);
std::string to_string(TrainMode mode);

enum class ParamGroup { encoder, adapter, bilstm, head };

std::string to_string(ParamGroup group);

// In lora mode only adapters, the Bi-LSTM and the position heads train.
bool is_trainable(ParamGroup group, TrainMode mode);

struct ParamEntry {
  std::string name;
  Shape shape;
  ParamGroup group;
};

struct ParamBudget {
  std::size_t total = 0;
  std::size_t trainable = 0;
  double fraction = 0.0;
  // Per group: total element count and trainable element count.
  std::map<std::string, std::size_t> total_by_group;
  std::map<std::string, std::size_t> trainable_by_group;
};

void to_json(nlohmann::json& j, const ParamBudget& b);

// Counts from a shape layout alone; used for presets too large to allocate.
ParamBudget count_params(std::span<const ParamEntry> layout, TrainMode mode);

}  // namespace disaqa
