// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "disaqa/data.hpp"
#include "disaqa/metrics.hpp"
#include "disaqa/model.hpp"

namespace disaqa {

struct TrainConfig {
  double lr_encoder_side = 2e-5;
  double lr_heads = 1e-4;
  std::size_t micro_batch = 16;
  std::size_t accumulation_steps = 4;
  std::size_t epochs = 8;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  // 0 disables early stopping.
  std::size_t early_stop_patience = 2;
  std::uint64_t seed = 42;

  std::size_t effective_batch() const { return micro_batch * accumulation_steps; }
  void validate() const;
};

// Missing keys keep their defaults; unknown keys are rejected.
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

class NonFiniteGradientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamWHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Biases and layer-norm parameters are exempt from weight decay.
bool applies_weight_decay(const std::string& name);

// One in-place AdamW update of a single tensor at step t (1-based).
// Throws NonFiniteGradientError naming `name` on a NaN/Inf gradient.
void adamw_update(const std::string& name, std::span<double> param, std::span<const double> grad,
                  std::span<double> m, std::span<double> v, std::size_t t, const AdamWHyper& h,
                  bool decay);

class AdamW {
 public:
  struct Slot {
    std::string name;
    Tensor param;
    AdamWHyper hyper;
  };

  explicit AdamW(std::vector<Slot> slots);

  // Applies the accumulated .grad of every slot, then clears it. All
  // gradients are checked before any parameter moves.
  void step();
  void zero_grad();
  std::size_t steps_taken() const { return t_; }
  const std::vector<Slot>& slots() const { return slots_; }

 private:
  std::vector<Slot> slots_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

// LoRA A/B (and the encoder, in full mode) get lr_encoder_side; the Bi-LSTM
// and heads get lr_heads.
AdamW make_optimizer(const QAModel& model, const TrainConfig& cfg);

class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  // Returns true on strict improvement.
  bool update(double metric, std::size_t epoch);
  bool should_stop() const { return patience_ > 0 && bad_epochs_ >= patience_; }
  double best() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }

 private:
  std::size_t patience_;
  double best_ = -std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::size_t bad_epochs_ = 0;
};

// Backpropagates the window loss (mean over micro-batches of the mean
// per-example loss) into the trainable parameters' gradients. Dropout is
// seeded per example from (seed, step, position in window). Returns the sum
// of per-example losses.
double accumulate_gradients(const QAModel& model, std::span<const Batch> window, std::uint64_t seed,
                            std::size_t step, bool train = true);

struct Evaluation {
  MetricsReport metrics;
  std::vector<SpanPrediction> predictions;
  std::vector<std::string> texts;
};

// Inference over `examples`, spread over up to thread_budget() threads.
Evaluation evaluate_model(const QAModel& model, const std::vector<Example>& examples);

// DISAQA_THREADS if set (>= 1), else 1.
std::size_t thread_budget();

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  MetricsReport val;
  bool improved = false;
  std::string checkpoint;
};

struct TrainingReport {
  std::vector<EpochRecord> epochs;
  std::size_t stopped_epoch = 0;
  std::size_t best_epoch = 0;
  std::string best_checkpoint;
  std::size_t optimizer_steps = 0;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::size_t dropped_train = 0;
  std::size_t dropped_val = 0;
  double wall_time_s = 0.0;

  const MetricsReport& best_metrics() const;
};

void to_json(nlohmann::json& j, const EpochRecord& r);
void to_json(nlohmann::json& j, const TrainingReport& r);

struct FitOptions {
  // When set (with vocab), "ckpt-epochN.dqaw" is written on every improvement.
  std::filesystem::path checkpoint_dir;
  const Vocab* vocab = nullptr;
  // Stops after this many optimizer steps; 0 means no limit.
  std::size_t max_steps = 0;
  std::function<void(const EpochRecord&)> on_epoch;
  // Ends training after the current epoch when it returns true.
  std::function<bool(const EpochRecord&)> stop_when;
};

// Trains `model` in place and restores the best validation weights.
TrainingReport fit(QAModel& model, const std::vector<Example>& train,
                   const std::vector<Example>& val, const TrainConfig& cfg,
                   const FitOptions& options = {});

}  // namespace disaqa
