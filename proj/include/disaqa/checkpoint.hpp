// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "disaqa/grad_check.hpp"
#include "disaqa/model.hpp"
#include "disaqa/tokenizer.hpp"

namespace disaqa {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary layout, all integers little-endian:
//   "DQAW" | u32 version | u64 config length | config JSON (UTF-8)
//   u64 tensor count, then per tensor:
//   u32 name length | name | u8 dtype (1 = float64) | u32 rank | u64 dims[rank]
//   | payload (numel IEEE-754 doubles)
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json config;
  std::vector<NamedTensor> tensors;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct LoadedModel {
  QAModel model;
  Vocab vocab;
};

// Full checkpoints carry every tensor; adapters-only checkpoints carry the
// "lora.*" tensors and must be applied onto a separately loaded base.
Checkpoint model_checkpoint(const QAModel& model, const Vocab& vocab, bool adapters_only = false);
void save_model(const std::filesystem::path& path, const QAModel& model, const Vocab& vocab,
                bool adapters_only = false);
LoadedModel load_model(const std::filesystem::path& path);
void apply_adapters(const std::filesystem::path& path, QAModel& model);

}  // namespace disaqa
