// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#include "disaqa/model.hpp"

#include <map>
#include <stdexcept>

namespace disaqa {

ModelConfig ModelConfig::toy(std::size_t vocab_size) {
  ModelConfig c;
  c.encoder = EncoderConfig::toy(vocab_size);
  // The toy base is random and frozen; dropout on it only adds noise.
  c.encoder.dropout_rate = 0.0;
  c.lora.dropout_rate = 0.0;
  return c;
}

ModelConfig ModelConfig::paper_scale() {
  ModelConfig c;
  c.encoder = EncoderConfig::paper_scale();
  return c;
}

ModelConfig ModelConfig::preset(const std::string& name, std::size_t vocab_size) {
  if (name == "toy") return toy(vocab_size);
  if (name == "paper-scale") return paper_scale();
  throw std::invalid_argument("unknown preset '" + name + "' (expected toy or paper-scale)");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"encoder", c.encoder}, {"lora", c.lora}, {"head", c.head}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.encoder = j.at("encoder").get<EncoderConfig>();
  c.lora = j.at("lora").get<LoraConfig>();
  c.head = j.at("head").get<HeadConfig>();
}

ParamGroup param_group(const std::string& name) {
  auto starts = [&](const char* p) { return name.rfind(p, 0) == 0; };
  if (starts("encoder.")) return ParamGroup::encoder;
  if (starts("lora.")) return ParamGroup::adapter;
  if (starts("bilstm.")) return ParamGroup::bilstm;
  if (starts("head.")) return ParamGroup::head;
  throw std::invalid_argument("parameter '" + name + "' belongs to no known group");
}

QAModel QAModel::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.encoder.validate();
  const std::size_t d = cfg.encoder.d_model;
  const std::size_t hidden = cfg.head.resolved_hidden(d);
  if (hidden == 0) throw std::invalid_argument("model: LSTM width must be >= 1");
  Rng rng(seed);
  QAModel m;
  m.cfg_ = cfg;
  m.encoder_ = EncoderWeights::init(cfg.encoder, rng);
  for (std::size_t l = 0; l < cfg.encoder.n_layers; ++l) {
    const std::string p = "lora." + std::to_string(l);
    m.adapters_.push_back({LoRAAdapter::init(d, d, cfg.lora, p + ".q", rng),
                           LoRAAdapter::init(d, d, cfg.lora, p + ".v", rng)});
  }
  m.bilstm_ = BiLSTMWeights::init(d, hidden, rng);
  m.heads_ = PositionHeadWeights::init(d, rng);
  m.set_train_mode(TrainMode::lora);
  return m;
}

std::vector<NamedTensor> QAModel::named_parameters() const {
  auto out = encoder_.named();
  for (const auto& la : adapters_) {
    for (const LoRAAdapter* ad : {&la.query, &la.value}) {
      out.emplace_back(ad->target_id + ".A", ad->a);
      out.emplace_back(ad->target_id + ".B", ad->b);
    }
  }
  for (auto& nt : bilstm_.named()) out.push_back(std::move(nt));
  for (auto& nt : heads_.named()) out.push_back(std::move(nt));
  return out;
}

std::vector<NamedTensor> QAModel::trainable_parameters() const {
  std::vector<NamedTensor> out;
  for (auto& nt : named_parameters())
    if (nt.second.requires_grad()) out.push_back(std::move(nt));
  return out;
}

void QAModel::set_train_mode(TrainMode mode) {
  mode_ = mode;
  for (auto [name, t] : named_parameters()) t.set_requires_grad(is_trainable(param_group(name), mode));
}

Tensor QAModel::encode_states(const PackedInput& packed, const ForwardContext& ctx) const {
  return encode(packed, cfg_.encoder, encoder_, adapters_, ctx);
}

PositionLogits QAModel::forward(const PackedInput& packed, const ForwardContext& ctx) const {
  // Padding is a masked suffix, so dropping it leaves real positions unchanged.
  const PackedInput real =
      packed.length() == packed.real_length() ? packed : packed.padded_to(packed.real_length());
  Tensor h = encode_states(real, ctx);
  return position_logits(bilstm_encode(h, bilstm_), heads_);
}

Tensor QAModel::loss(const PackedInput& packed, TokenSpan gold, const ForwardContext& ctx) const {
  auto logits = forward(packed, ctx);
  return qa_loss(logits.start, logits.end, gold, packed.context, cfg_.head.end_weight);
}

SpanPrediction QAModel::predict(const PackedInput& packed) const {
  NoGradGuard guard;
  auto logits = forward(packed, {});
  return decode_span(logits.start.values(), logits.end.values(), packed.context,
                     cfg_.head.max_answer_len);
}

QAModel QAModel::clone() const {
  // Shallow copy first, then re-point every handle at a deep copy.
  QAModel m = *this;
  auto copy = [](Tensor& t) {
    if (t.defined()) t = t.clone();
  };
  copy(m.encoder_.token_embedding);
  copy(m.encoder_.position_embedding);
  copy(m.encoder_.segment_embedding);
  copy(m.encoder_.embedding_ln_gamma);
  copy(m.encoder_.embedding_ln_beta);
  for (auto& l : m.encoder_.layers) {
    for (Tensor* t : {&l.q_weight, &l.q_bias, &l.k_weight, &l.k_bias, &l.v_weight, &l.v_bias,
                      &l.o_weight, &l.o_bias, &l.attn_ln_gamma, &l.attn_ln_beta, &l.ffn_in_weight,
                      &l.ffn_in_bias, &l.ffn_out_weight, &l.ffn_out_bias, &l.ffn_ln_gamma,
                      &l.ffn_ln_beta})
      copy(*t);
  }
  for (auto& la : m.adapters_) {
    la.query = la.query.clone();
    la.value = la.value.clone();
  }
  for (auto* c : {&m.bilstm_.forward, &m.bilstm_.backward}) {
    copy(c->w_ih);
    copy(c->w_hh);
    copy(c->bias);
  }
  copy(m.bilstm_.proj_weight);
  copy(m.bilstm_.proj_bias);
  for (auto* h : {&m.heads_.start, &m.heads_.end}) {
    copy(h->hidden_weight);
    copy(h->hidden_bias);
    copy(h->out_weight);
    copy(h->out_bias);
  }
  return m;
}

QAModel QAModel::merged() const {
  QAModel m = clone();
  for (std::size_t l = 0; l < m.adapters_.size(); ++l) {
    auto& lw = m.encoder_.layers[l];
    const bool q_grad = lw.q_weight.requires_grad();
    const bool v_grad = lw.v_weight.requires_grad();
    lw.q_weight = merge(lw.q_weight.detach(), m.adapters_[l].query).set_requires_grad(q_grad);
    lw.v_weight = merge(lw.v_weight.detach(), m.adapters_[l].value).set_requires_grad(v_grad);
  }
  m.adapters_.clear();
  return m;
}

std::size_t QAModel::load_tensors(const std::vector<NamedTensor>& tensors) {
  std::map<std::string, Tensor> own;
  for (auto& [name, t] : named_parameters()) own.emplace(name, t);
  std::size_t matched = 0;
  for (const auto& [name, src] : tensors) {
    auto it = own.find(name);
    if (it == own.end()) continue;
    Tensor dst = it->second;
    if (dst.shape() != src.shape()) {
      throw DimensionError("tensor '" + name + "': checkpoint shape " + shape_str(src.shape()) +
                           " vs model shape " + shape_str(dst.shape()));
    }
    std::copy(src.values().begin(), src.values().end(), dst.values().begin());
    ++matched;
  }
  return matched;
}

std::vector<ParamEntry> model_layout(const ModelConfig& cfg) {
  auto out = encoder_layout(cfg.encoder);
  const std::size_t d = cfg.encoder.d_model, r = cfg.lora.rank;
  for (std::size_t l = 0; l < cfg.encoder.n_layers; ++l) {
    for (const char* m : {"q", "v"}) {
      const std::string p = "lora." + std::to_string(l) + "." + m;
      out.push_back({p + ".A", {r, d}, ParamGroup::adapter});
      out.push_back({p + ".B", {d, r}, ParamGroup::adapter});
    }
  }
  for (auto& e : head_layout(d, cfg.head)) out.push_back(std::move(e));
  return out;
}

ParamBudget count_params(const QAModel& model, TrainMode mode) {
  std::vector<ParamEntry> layout;
  for (const auto& [name, t] : model.named_parameters())
    layout.push_back({name, t.shape(), param_group(name)});
  return count_params(layout, mode);
}

}  // namespace disaqa
