// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "disaqa/checkpoint.hpp"
#include "disaqa/diagnostics.hpp"
#include "disaqa/model.hpp"
#include "test_util.hpp"

namespace disaqa {
namespace {

class ModelTest : public ::testing::Test {
 protected:
  Vocab vocab = build_vocab({"which city was hit? the flood hit kobe at 10:05."}, 1);
  QAModel model = QAModel::init(tiny_config(vocab.size()), 3);
  PackedInput packed = encode_pair("which city?", "flood hit kobe", vocab, 32);

  void randomize_adapters(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& la : model.adapters())
      for (LoRAAdapter* ad : {&la.query, &la.value})
        ad->b = Tensor::randn(ad->b.shape(), 0.3, rng).set_requires_grad(true);
  }
};

TEST_F(ModelTest, ParameterNamesAndOrder) {
  auto named = model.named_parameters();
  EXPECT_EQ(named.front().first, "encoder.embeddings.token");
  std::size_t first_lora = 0, first_bilstm = 0, first_head = 0;
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& n = named[i].first;
    if (!first_lora && n.rfind("lora.", 0) == 0) first_lora = i;
    if (!first_bilstm && n.rfind("bilstm.", 0) == 0) first_bilstm = i;
    if (!first_head && n.rfind("head.", 0) == 0) first_head = i;
  }
  EXPECT_EQ(named[first_lora].first, "lora.0.q.A");
  EXPECT_EQ(named[first_lora + 3].first, "lora.0.v.B");
  EXPECT_LT(first_lora, first_bilstm);
  EXPECT_LT(first_bilstm, first_head);
  EXPECT_EQ(named.back().first, "head.end.out.bias");
}

TEST_F(ModelTest, TrainModeControlsRequiresGrad) {
  for (const auto& [n, t] : model.named_parameters())
    EXPECT_EQ(t.requires_grad(), param_group(n) != ParamGroup::encoder) << n;
  model.set_train_mode(TrainMode::full);
  for (const auto& [n, t] : model.named_parameters()) EXPECT_TRUE(t.requires_grad()) << n;
}

TEST_F(ModelTest, ForwardTrimsPadding) {
  auto lg = model.forward(packed, {});
  EXPECT_EQ(lg.start.dim(0), packed.real_length());
  auto again = model.forward(packed.padded_to(packed.real_length()), {});
  EXPECT_EQ(testing::max_abs_diff(lg.start, again.start), 0.0);
}

TEST_F(ModelTest, ZeroBMatchesAdapterFreeEncoder) {
  Tensor with = model.encode_states(packed, {});
  Tensor without = encode(packed, model.config().encoder, model.encoder(), {}, {});
  EXPECT_LE(testing::max_abs_diff(with, without), 1e-7);
}

TEST_F(ModelTest, MergedAgreesWithUnmerged) {
  randomize_adapters(11);
  QAModel merged = model.merged();
  EXPECT_TRUE(merged.adapters().empty());
  auto a = model.forward(packed, {}), b = merged.forward(packed, {});
  EXPECT_LT(testing::max_abs_diff(a.start, b.start), 1e-5);
  EXPECT_LT(testing::max_abs_diff(a.end, b.end), 1e-5);
}

TEST_F(ModelTest, CloneIsDeep) {
  QAModel copy = model.clone();
  copy.heads().start.out_bias.values()[0] += 1.0;
  EXPECT_NE(copy.heads().start.out_bias.item(), model.heads().start.out_bias.item());
}

TEST_F(ModelTest, LoadTensorsByName) {
  QAModel other = QAModel::init(model.config(), 99);
  EXPECT_EQ(other.load_tensors(model.named_parameters()), model.named_parameters().size());
  auto a = model.forward(packed, {}), b = other.forward(packed, {});
  EXPECT_EQ(testing::max_abs_diff(a.start, b.start), 0.0);
  EXPECT_EQ(other.load_tensors({{"unknown", Tensor({1})}}), 0u);
  EXPECT_THROW(other.load_tensors({{"head.start.out.bias", Tensor({2})}}), DimensionError);
}

TEST_F(ModelTest, ZeroLstmLeavesEncoderStates) {
  Tensor h = model.encode_states(packed.padded_to(packed.real_length()), {});
  Tensor out = bilstm_encode(h, BiLSTMWeights::zeros(8, 4));
  EXPECT_EQ(testing::max_abs_diff(out, h), 0.0);
}

TEST_F(ModelTest, PredictStaysInContext) {
  randomize_adapters(12);
  auto p = model.predict(packed);
  EXPECT_TRUE(packed.context.contains(p.start));
  EXPECT_TRUE(packed.context.contains(p.end));
  EXPECT_LE(p.start, p.end);
}

TEST(Diagnostics, EndToEndGradCheck) {
  auto r = model_grad_check(5);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param;
  EXPECT_GT(r.analytic_norms.at("lora.0.q.A"), 0.0);
  auto lora_only = model_grad_check(5, TrainMode::lora);
  EXPECT_EQ(lora_only.analytic_norms.at("encoder.layer.0.attn.q.weight"), 0.0);
  EXPECT_LT(lora_only.max_rel_error, 1e-4);
}

TEST(ModelConfig, PresetsAndJson) {
  EXPECT_THROW(ModelConfig::preset("huge", 10), std::invalid_argument);
  const auto c = ModelConfig::preset("toy", 77);
  EXPECT_EQ(c.encoder.vocab_size, 77u);
  EXPECT_EQ(nlohmann::json(nlohmann::json(c).get<ModelConfig>()), nlohmann::json(c));
}

// ---------------------------------------------------------------------------

class CheckpointTest : public ModelTest {
 protected:
  testing::TempDir dir{"ckpt"};
};

TEST_F(CheckpointTest, BitExactRoundTrip) {
  randomize_adapters(13);
  model.set_train_mode(TrainMode::full);
  const auto path = dir.path() / "m.dqaw";
  save_model(path, model, vocab);
  LoadedModel back = load_model(path);
  EXPECT_EQ(back.vocab, vocab);
  EXPECT_EQ(back.model.train_mode(), TrainMode::full);
  auto a = model.named_parameters(), b = back.model.named_parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    ASSERT_EQ(a[i].second.shape(), b[i].second.shape());
    for (std::size_t k = 0; k < a[i].second.numel(); ++k)
      ASSERT_EQ(std::bit_cast<std::uint64_t>(a[i].second.values()[k]),
                std::bit_cast<std::uint64_t>(b[i].second.values()[k]));
  }
  EXPECT_EQ(serialize_checkpoint(model_checkpoint(model, vocab)),
            serialize_checkpoint(model_checkpoint(back.model, back.vocab)));
}

TEST_F(CheckpointTest, HeaderLayout) {
  const std::string bytes = serialize_checkpoint({nlohmann::json{{"k", 1}}, {{"t", Tensor({2}, {1.5, -2})}}});
  EXPECT_EQ(bytes.substr(0, 4), "DQAW");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);  // version, little-endian
  const std::string cfg = R"({"k":1})";
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), cfg.size());
  EXPECT_EQ(bytes.substr(16, cfg.size()), cfg);
  // count + name length + "t" + dtype + rank + dim + 2 doubles
  EXPECT_EQ(bytes.size(), 16 + cfg.size() + 8 + 4 + 1 + 1 + 4 + 8 + 16);
}

TEST_F(CheckpointTest, AdaptersOnlyAppliesOntoBase) {
  randomize_adapters(14);
  const auto full = dir.path() / "base.dqaw", ad = dir.path() / "ad.dqaw";
  QAModel base = QAModel::init(model.config(), 3);  // same seed, zero B
  save_model(full, base, vocab);
  save_model(ad, model, vocab, true);
  auto ckpt = load_checkpoint(ad);
  for (const auto& [n, _] : ckpt.tensors) EXPECT_EQ(n.rfind("lora.", 0), 0u) << n;
  EXPECT_THROW(load_model(ad), CheckpointError);
  LoadedModel restored = load_model(full);
  apply_adapters(ad, restored.model);
  auto a = model.forward(packed, {}), b = restored.model.forward(packed, {});
  EXPECT_EQ(testing::max_abs_diff(a.end, b.end), 0.0);
}

TEST_F(CheckpointTest, CorruptFilesAreRejected) {
  std::string bytes = serialize_checkpoint(model_checkpoint(model, vocab));
  EXPECT_THROW(deserialize_checkpoint("XXXX" + bytes.substr(4)), CheckpointError);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), CheckpointError);
  EXPECT_THROW(deserialize_checkpoint(bytes + "x"), CheckpointError);
  std::string v2 = bytes;
  v2[4] = 2;
  EXPECT_THROW(deserialize_checkpoint(v2), CheckpointError);
  EXPECT_THROW(load_checkpoint(dir.path() / "missing.dqaw"), CheckpointError);
}

}  // namespace
}  // namespace disaqa
