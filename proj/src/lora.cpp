// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#include "disaqa/lora.hpp"

#include <stdexcept>

namespace disaqa {

void to_json(nlohmann::json& j, const LoraConfig& c) {
  j = {{"rank", c.rank}, {"alpha", c.alpha}, {"dropout_rate", c.dropout_rate}};
}

void from_json(const nlohmann::json& j, LoraConfig& c) {
  c.rank = j.at("rank").get<std::size_t>();
  c.alpha = j.at("alpha").get<double>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  if (c.rank == 0) throw std::invalid_argument("lora: rank must be >= 1");
}

LoRAAdapter LoRAAdapter::init(std::size_t out_features, std::size_t in_features,
                              const LoraConfig& cfg, std::string target_id, Rng& rng) {
  if (cfg.rank == 0 || cfg.rank > std::min(out_features, in_features)) {
    throw std::invalid_argument("lora: rank " + std::to_string(cfg.rank) + " exceeds min(" +
                                std::to_string(out_features) + "," + std::to_string(in_features) + ")");
  }
  LoRAAdapter ad;
  ad.a = Tensor::randn({cfg.rank, in_features}, 0.02, rng);
  ad.b = Tensor({out_features, cfg.rank}, 0.0);
  ad.a.set_requires_grad(true);
  ad.b.set_requires_grad(true);
  ad.rank = cfg.rank;
  ad.alpha = cfg.alpha;
  ad.dropout_rate = cfg.dropout_rate;
  ad.target_id = std::move(target_id);
  return ad;
}

LoRAAdapter LoRAAdapter::clone() const {
  LoRAAdapter c = *this;
  c.a = a.clone();
  c.b = b.clone();
  return c;
}

namespace {

void check_adapter(const Tensor& base_w, const LoRAAdapter& ad) {
  if (base_w.rank() != 2 || ad.a.rank() != 2 || ad.b.rank() != 2) {
    throw DimensionError("lora: base, A and B must be matrices");
  }
  if (ad.a.dim(0) != ad.rank || ad.b.dim(1) != ad.rank) {
    throw DimensionError("lora: rank mismatch, A " + shape_str(ad.a.shape()) + ", B " +
                         shape_str(ad.b.shape()) + ", rank " + std::to_string(ad.rank));
  }
  if (ad.b.dim(0) != base_w.dim(0) || ad.a.dim(1) != base_w.dim(1)) {
    throw DimensionError("lora: adapter B " + shape_str(ad.b.shape()) + " / A " +
                         shape_str(ad.a.shape()) + " does not fit base " + shape_str(base_w.shape()));
  }
}

}  // namespace

Tensor lora_forward(const Tensor& x, const Tensor& base_w, const LoRAAdapter& adapter,
                    const ForwardContext& ctx) {
  check_adapter(base_w, adapter);
  if (base_w.requires_grad()) throw std::logic_error("lora: base matrix must be frozen");
  return add(matmul_nt(x, base_w), lora_delta(x, adapter, ctx));
}

Tensor lora_delta(const Tensor& x, const LoRAAdapter& adapter, const ForwardContext& ctx) {
  if (x.rank() != 2 || x.dim(1) != adapter.in_features()) {
    throw DimensionError("lora: input " + shape_str(x.shape()) + " vs adapter A " +
                         shape_str(adapter.a.shape()));
  }
  Tensor dx = maybe_dropout(x, adapter.dropout_rate, ctx);
  return scale(matmul_nt(matmul_nt(dx, adapter.a), adapter.b), adapter.scaling());
}

Tensor merge(const Tensor& base_w, const LoRAAdapter& adapter) {
  check_adapter(base_w, adapter);
  NoGradGuard guard;
  return add(base_w.detach(), scale(matmul(adapter.b.detach(), adapter.a.detach()), adapter.scaling()));
}

// ---------------------------------------------------------------------------

TrainMode parse_train_mode(const std::string& s) {
  if (s == "lora") return TrainMode::lora;
  if (s == "full") return TrainMode::full;
  throw std::invalid_argument("unknown train mode '" + s + "' (expected lora or full)");
}

std::string to_string(TrainMode mode) { return mode == TrainMode::lora ? "lora" : "full"; }

std::string to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::encoder: return "encoder";
    case ParamGroup::adapter: return "lora";
    case ParamGroup::bilstm: return "bilstm";
    case ParamGroup::head: return "head";
  }
  return "unknown";
}

bool is_trainable(ParamGroup group, TrainMode mode) {
  return mode == TrainMode::full || group != ParamGroup::encoder;
}

void to_json(nlohmann::json& j, const ParamBudget& b) {
  j = {{"total", b.total},
       {"trainable", b.trainable},
       {"fraction", b.fraction},
       {"total_by_group", b.total_by_group},
       {"trainable_by_group", b.trainable_by_group}};
}

ParamBudget count_params(std::span<const ParamEntry> layout, TrainMode mode) {
  ParamBudget b;
  for (const auto& e : layout) {
    const std::size_t n = shape_numel(e.shape);
    const auto g = to_string(e.group);
    b.total += n;
    b.total_by_group[g] += n;
    auto& t = b.trainable_by_group[g];
    if (is_trainable(e.group, mode)) {
      b.trainable += n;
      t += n;
    }
  }
  b.fraction = b.total ? static_cast<double>(b.trainable) / static_cast<double>(b.total) : 0.0;
  return b;
}

}  // namespace disaqa
