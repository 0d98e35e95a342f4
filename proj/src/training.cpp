// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#include "disaqa/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <random>
#include <set>
#include <thread>

#include <spdlog/spdlog.h>

#include "disaqa/checkpoint.hpp"

namespace disaqa {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
  if (!(lr_encoder_side >= 0.0) || !(lr_heads >= 0.0)) fail("learning rates must be >= 0");
  if (micro_batch == 0) fail("micro_batch must be >= 1");
  if (accumulation_steps == 0) fail("accumulation_steps must be >= 1");
  if (epochs == 0) fail("epochs must be >= 1");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must lie in [0,1)");
  if (!(eps_adam > 0.0)) fail("eps_adam must be > 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lr_encoder_side", c.lr_encoder_side},
       {"lr_heads", c.lr_heads},
       {"micro_batch", c.micro_batch},
       {"accumulation_steps", c.accumulation_steps},
       {"epochs", c.epochs},
       {"weight_decay", c.weight_decay},
       {"betas", {c.beta1, c.beta2}},
       {"eps_adam", c.eps_adam},
       {"early_stop_patience", c.early_stop_patience},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  static const std::set<std::string> known{
      "lr_encoder_side", "lr_heads", "micro_batch", "accumulation_steps", "epochs",
      "weight_decay",    "betas",    "eps_adam",    "early_stop_patience", "seed"};
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  for (const auto& [k, _] : j.items())
    if (!known.count(k)) throw std::invalid_argument("train config: unknown key '" + k + "'");
  c.lr_encoder_side = j.value("lr_encoder_side", c.lr_encoder_side);
  c.lr_heads = j.value("lr_heads", c.lr_heads);
  c.micro_batch = j.value("micro_batch", c.micro_batch);
  c.accumulation_steps = j.value("accumulation_steps", c.accumulation_steps);
  c.epochs = j.value("epochs", c.epochs);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  if (j.contains("betas")) {
    const auto& b = j.at("betas");
    if (!b.is_array() || b.size() != 2) throw std::invalid_argument("train config: betas needs 2 values");
    c.beta1 = b[0].get<double>();
    c.beta2 = b[1].get<double>();
  }
  c.eps_adam = j.value("eps_adam", c.eps_adam);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  c.seed = j.value("seed", c.seed);
  c.validate();
}

bool applies_weight_decay(const std::string& name) {
  auto ends = [&](std::string_view s) {
    return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
  };
  return !(ends("bias") || ends("gamma") || ends("beta") || name.find(".ln.") != std::string::npos);
}

void adamw_update(const std::string& name, std::span<double> param, std::span<const double> grad,
                  std::span<double> m, std::span<double> v, std::size_t t, const AdamWHyper& h,
                  bool decay) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw DimensionError("adamw_update: buffer sizes disagree for '" + name + "'");
  }
  if (t == 0) throw std::invalid_argument("adamw_update: step counter is 1-based");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw NonFiniteGradientError("non-finite gradient " + std::to_string(grad[i]) + " in '" +
                                   name + "' at element " + std::to_string(i) + " (step " +
                                   std::to_string(t) + ")");
    }
  }
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  const double shrink = decay ? 1.0 - h.lr * h.weight_decay : 1.0;
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * grad[i];
    v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * grad[i] * grad[i];
    param[i] = param[i] * shrink - h.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + h.eps);
  }
}

AdamW::AdamW(std::vector<Slot> slots) : slots_(std::move(slots)) {
  for (const auto& s : slots_) {
    m_.emplace_back(s.param.numel(), 0.0);
    v_.emplace_back(s.param.numel(), 0.0);
  }
}

void AdamW::step() {
  for (auto& s : slots_) {
    for (double g : s.param.mutable_grad()) {
      if (!std::isfinite(g)) {
        throw NonFiniteGradientError("non-finite gradient in '" + s.name + "' before step " +
                                     std::to_string(t_ + 1));
      }
    }
  }
  ++t_;
  for (std::size_t k = 0; k < slots_.size(); ++k) {
    auto& s = slots_[k];
    adamw_update(s.name, s.param.values(), s.param.mutable_grad(), m_[k], v_[k], t_, s.hyper,
                 applies_weight_decay(s.name));
  }
  zero_grad();
}

void AdamW::zero_grad() {
  for (auto& s : slots_) s.param.zero_grad();
}

AdamW make_optimizer(const QAModel& model, const TrainConfig& cfg) {
  std::vector<AdamW::Slot> slots;
  for (auto& [name, t] : model.trainable_parameters()) {
    const ParamGroup g = param_group(name);
    const bool encoder_side = g == ParamGroup::adapter || g == ParamGroup::encoder;
    AdamWHyper h{encoder_side ? cfg.lr_encoder_side : cfg.lr_heads, cfg.beta1, cfg.beta2,
                 cfg.eps_adam, cfg.weight_decay};
    slots.push_back({name, t, h});
  }
  return AdamW(std::move(slots));
}

bool EarlyStopper::update(double metric, std::size_t epoch) {
  if (metric > best_) {
    best_ = metric;
    best_epoch_ = epoch;
    bad_epochs_ = 0;
    return true;
  }
  ++bad_epochs_;
  return false;
}

double accumulate_gradients(const QAModel& model, std::span<const Batch> window, std::uint64_t seed,
                            std::size_t step, bool train) {
  double total = 0.0;
  std::size_t position = 0;
  const double per_batch = 1.0 / static_cast<double>(window.size());
  for (const Batch& batch : window) {
    const double weight = per_batch / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i, ++position) {
      std::seed_seq sq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                       static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(position)};
      Rng rng(sq);
      Tensor loss = model.loss(batch.inputs[i], batch.golds[i], {train, &rng});
      total += loss.item();
      scale(loss, weight).backward();
    }
  }
  return total;
}

std::size_t thread_budget() {
  if (const char* env = std::getenv("DISAQA_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<std::size_t>(v);
    spdlog::warn("ignoring DISAQA_THREADS='{}' (expected a positive integer)", env);
  }
  return 1;
}

Evaluation evaluate_model(const QAModel& model, const std::vector<Example>& examples) {
  if (examples.empty()) throw std::invalid_argument("evaluate_model: no examples");
  Evaluation ev;
  ev.predictions.resize(examples.size());
  const std::size_t n_threads = std::min(thread_budget(), examples.size());
  auto work = [&](std::size_t first) {
    for (std::size_t i = first; i < examples.size(); i += n_threads)
      ev.predictions[i] = model.predict(examples[i].input);
  };
  if (n_threads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work, t);
  }
  std::vector<TokenSpan> preds, golds;
  std::vector<std::string> gold_texts;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const TokenSpan p{ev.predictions[i].start, ev.predictions[i].end};
    preds.push_back(p);
    golds.push_back(examples[i].gold);
    ev.texts.push_back(span_text(examples[i].context, examples[i].input, p));
    gold_texts.push_back(examples[i].answer_text);
  }
  ev.metrics = evaluate(preds, golds, ev.texts, gold_texts);
  return ev;
}

const MetricsReport& TrainingReport::best_metrics() const {
  for (const auto& e : epochs)
    if (e.epoch == best_epoch) return e.val;
  throw std::logic_error("training report has no best epoch");
}

void to_json(nlohmann::json& j, const EpochRecord& r) {
  j = {{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val", r.val},
       {"improved", r.improved}, {"checkpoint", r.checkpoint}};
}

void to_json(nlohmann::json& j, const TrainingReport& r) {
  j = {{"epochs", r.epochs},
       {"stopped_epoch", r.stopped_epoch},
       {"best_epoch", r.best_epoch},
       {"best_checkpoint", r.best_checkpoint},
       {"optimizer_steps", r.optimizer_steps},
       {"split", {{"train", r.n_train}, {"val", r.n_val}}},
       {"dropped", {{"train", r.dropped_train}, {"val", r.dropped_val}}},
       {"wall_time_s", r.wall_time_s}};
}

TrainingReport fit(QAModel& model, const std::vector<Example>& train,
                   const std::vector<Example>& val, const TrainConfig& cfg,
                   const FitOptions& options) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("fit: empty training set");
  if (val.empty()) throw std::invalid_argument("fit: empty validation set");
  const auto t0 = std::chrono::steady_clock::now();

  AdamW opt = make_optimizer(model, cfg);
  opt.zero_grad();
  EarlyStopper stopper(cfg.early_stop_patience);
  TrainingReport report;
  report.n_train = train.size();
  report.n_val = val.size();
  std::vector<NamedTensor> best;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto batches = batch_examples(train, cfg.micro_batch, cfg.seed + epoch);
    double loss_sum = 0.0;
    bool hit_limit = false;
    for (std::size_t b = 0; b < batches.size(); b += cfg.accumulation_steps) {
      const std::size_t n = std::min(cfg.accumulation_steps, batches.size() - b);
      loss_sum += accumulate_gradients(model, std::span(batches).subspan(b, n), cfg.seed,
                                       opt.steps_taken());
      opt.step();
      if (options.max_steps && opt.steps_taken() >= options.max_steps) {
        hit_limit = true;
        break;
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    rec.val = evaluate_model(model, val).metrics;
    rec.improved = stopper.update(rec.val.end_accuracy, epoch);
    if (rec.improved) {
      best.clear();
      for (const auto& [name, t] : model.named_parameters()) best.emplace_back(name, t.clone());
      if (!options.checkpoint_dir.empty() && options.vocab) {
        const auto path = options.checkpoint_dir / ("ckpt-epoch" + std::to_string(epoch) + ".dqaw");
        save_model(path, model, *options.vocab);
        rec.checkpoint = path.filename().string();
        report.best_checkpoint = rec.checkpoint;
      }
      report.best_epoch = epoch;
    }
    spdlog::info("epoch {}: train loss {:.4f}, val end acc {:.4f}, span F1 {:.4f}{}", epoch,
                 rec.train_loss, rec.val.end_accuracy, rec.val.span_f1, rec.improved ? " *" : "");
    report.epochs.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
    report.stopped_epoch = epoch;
    if (hit_limit || stopper.should_stop()) break;
    if (options.stop_when && options.stop_when(rec)) break;
  }

  model.load_tensors(best);
  report.optimizer_steps = opt.steps_taken();
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace disaqa
