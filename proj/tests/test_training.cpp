// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "disaqa/diagnostics.hpp"
#include "disaqa/training.hpp"
#include "test_util.hpp"

namespace disaqa {
namespace {

TEST(AdamW, FirstStepMovesByLearningRate) {
  std::vector<double> p{1.0, -2.0, 0.5}, g{0.3, -7.0, 1e-3}, m(3, 0.0), v(3, 0.0);
  AdamWHyper h;
  h.lr = 0.01;
  adamw_update("w", p, g, m, v, 1, h, true);
  EXPECT_NEAR(p[0], 1.0 - 0.01, 1e-8);
  EXPECT_NEAR(p[1], -2.0 + 0.01, 1e-8);
  EXPECT_NEAR(p[2], 0.5 - 0.01, 1e-6);
}

TEST(AdamW, ZeroGradientWithoutDecayIsANoOp) {
  std::vector<double> p{1.5, -3.0}, g(2, 0.0), m(2, 0.0), v(2, 0.0);
  AdamWHyper h;
  adamw_update("w", p, g, m, v, 1, h, true);
  EXPECT_EQ(p, (std::vector<double>{1.5, -3.0}));
}

TEST(AdamW, ZeroGradientWithDecayShrinks) {
  std::vector<double> p{1.5, -3.0}, g(2, 0.0), m(2, 0.0), v(2, 0.0);
  AdamWHyper h;
  h.lr = 0.1;
  h.weight_decay = 0.01;
  adamw_update("w", p, g, m, v, 1, h, true);
  EXPECT_DOUBLE_EQ(p[0], 1.5 * (1 - 0.1 * 0.01));
  EXPECT_DOUBLE_EQ(p[1], -3.0 * (1 - 0.1 * 0.01));
  std::vector<double> q{1.5};
  std::vector<double> g1(1, 0.0), m1(1, 0.0), v1(1, 0.0);
  adamw_update("b", q, g1, m1, v1, 1, h, false);
  EXPECT_EQ(q[0], 1.5);
}

TEST(AdamW, DecayExemptions) {
  EXPECT_FALSE(applies_weight_decay("encoder.layer.0.attn.q.bias"));
  EXPECT_FALSE(applies_weight_decay("encoder.layer.0.attn.ln.gamma"));
  EXPECT_FALSE(applies_weight_decay("encoder.embeddings.ln.beta"));
  EXPECT_FALSE(applies_weight_decay("bilstm.fwd.bias"));
  EXPECT_TRUE(applies_weight_decay("lora.0.q.A"));
  EXPECT_TRUE(applies_weight_decay("head.start.hidden.weight"));
}

TEST(AdamW, NonFiniteGradientAbortsBeforeAnyUpdate) {
  Tensor a = Tensor({2}, {1, 2}).set_requires_grad(true);
  Tensor b = Tensor({1}, {3}).set_requires_grad(true);
  AdamW opt({{"a", a, {}}, {"b", b, {}}});
  a.mutable_grad()[0] = 1.0;
  b.mutable_grad()[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    opt.step();
    FAIL();
  } catch (const NonFiniteGradientError& e) {
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos) << e.what();
  }
  EXPECT_EQ(a.at(0), 1.0);
  EXPECT_EQ(opt.steps_taken(), 0u);
}

TEST(TrainConfig, DefaultsAndJson) {
  TrainConfig c;
  EXPECT_EQ(c.effective_batch(), 64u);
  EXPECT_DOUBLE_EQ(c.lr_encoder_side, 2e-5);
  EXPECT_DOUBLE_EQ(c.lr_heads, 1e-4);
  EXPECT_EQ(c.epochs, 8u);
  nlohmann::json j = c;
  for (const char* k : {"lr_encoder_side", "lr_heads", "micro_batch", "accumulation_steps", "epochs",
                        "weight_decay", "betas", "eps_adam", "early_stop_patience", "seed"})
    EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(nlohmann::json(j.get<TrainConfig>()), j);
  EXPECT_EQ(nlohmann::json::parse(R"({"epochs":3})").get<TrainConfig>().micro_batch, 16u);
  EXPECT_THROW(nlohmann::json::parse(R"({"epoch":3})").get<TrainConfig>(), std::invalid_argument);
  EXPECT_THROW(nlohmann::json::parse(R"({"micro_batch":0})").get<TrainConfig>(), std::invalid_argument);
}

TEST(EarlyStopper, StopsAfterPatienceFlatEpochs) {
  EarlyStopper s(2);
  EXPECT_TRUE(s.update(0.5, 1));
  EXPECT_FALSE(s.should_stop());
  EXPECT_FALSE(s.update(0.5, 2));
  EXPECT_FALSE(s.should_stop());
  EXPECT_FALSE(s.update(0.5, 3));
  EXPECT_TRUE(s.should_stop());
  EXPECT_EQ(s.best_epoch(), 1u);
  EarlyStopper off(0);
  for (std::size_t e = 1; e < 10; ++e) off.update(0.0, e);
  EXPECT_FALSE(off.should_stop());
}

// Small model with room for synthetic contexts.
ModelConfig small_model(std::size_t vocab) {
  ModelConfig c = tiny_config(vocab);
  c.encoder.max_position = 256;
  return c;
}

class FitTest : public ::testing::Test {
 protected:
  std::vector<QARecord> records = generate_synthetic(40, 11);
  Vocab vocab = build_vocab(corpus_texts(records), 1);
  std::vector<Example> examples = encode_records(records, vocab, 256).examples;
  std::vector<Example> train{examples.begin(), examples.begin() + 32};
  std::vector<Example> val{examples.begin() + 32, examples.end()};

  TrainConfig quick() const {
    TrainConfig c;
    c.lr_heads = 1e-2;
    c.lr_encoder_side = 1e-2;
    c.micro_batch = 8;
    c.accumulation_steps = 1;
    c.epochs = 2;
    return c;
  }
};

TEST_F(FitTest, ConstantMetricStopsAfterPatience) {
  QAModel m = QAModel::init(small_model(vocab.size()), 1);
  TrainConfig c = quick();
  c.lr_heads = c.lr_encoder_side = 0.0;
  c.weight_decay = 0.0;
  c.epochs = 8;
  c.early_stop_patience = 2;
  auto r = fit(m, train, val, c);
  EXPECT_EQ(r.stopped_epoch, 3u);
  EXPECT_EQ(r.best_epoch, 1u);
  EXPECT_EQ(r.epochs.size(), 3u);
}

TEST_F(FitTest, FrozenParametersNeverChange) {
  QAModel m = QAModel::init(small_model(vocab.size()), 2);
  QAModel before = m.clone();
  fit(m, train, val, quick());
  auto a = m.named_parameters(), b = before.named_parameters();
  bool adapters_moved = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = testing::max_abs_diff(a[i].second, b[i].second);
    if (param_group(a[i].first) == ParamGroup::encoder) EXPECT_EQ(d, 0.0) << a[i].first;
    if (param_group(a[i].first) == ParamGroup::adapter && d > 0) adapters_moved = true;
  }
  EXPECT_TRUE(adapters_moved);
}

TEST_F(FitTest, DeterministicForFixedSeed) {
  QAModel a = QAModel::init(small_model(vocab.size()), 3), b = QAModel::init(small_model(vocab.size()), 3);
  auto ra = fit(a, train, val, quick()), rb = fit(b, train, val, quick());
  auto pa = a.named_parameters(), pb = b.named_parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(testing::max_abs_diff(pa[i].second, pb[i].second), 0.0);
  EXPECT_EQ(nlohmann::json(ra.best_metrics()), nlohmann::json(rb.best_metrics()));
}

TEST_F(FitTest, BestWeightsRestoredAndCheckpointed) {
  testing::TempDir dir("fit");
  QAModel m = QAModel::init(small_model(vocab.size()), 4);
  FitOptions o;
  o.checkpoint_dir = dir.path();
  o.vocab = &vocab;
  TrainConfig c = quick();
  c.epochs = 3;
  auto r = fit(m, train, val, c, o);
  EXPECT_EQ(evaluate_model(m, val).metrics.end_accuracy, r.best_metrics().end_accuracy);
  for (const auto& e : r.epochs) {
    EXPECT_EQ(e.improved, !e.checkpoint.empty());
    if (e.improved) EXPECT_TRUE(std::filesystem::exists(dir.path() / e.checkpoint));
  }
  EXPECT_EQ(r.best_checkpoint, "ckpt-epoch" + std::to_string(r.best_epoch) + ".dqaw");
  double best = -1;
  for (const auto& e : r.epochs) best = std::max(best, e.val.end_accuracy);
  EXPECT_EQ(r.best_metrics().end_accuracy, best);
}

TEST_F(FitTest, LearningRateGroups) {
  QAModel m = QAModel::init(small_model(vocab.size()), 5);
  TrainConfig c;
  AdamW opt = make_optimizer(m, c);
  for (const auto& s : opt.slots()) {
    const auto g = param_group(s.name);
    EXPECT_NE(g, ParamGroup::encoder);
    EXPECT_EQ(s.hyper.lr, g == ParamGroup::adapter ? c.lr_encoder_side : c.lr_heads) << s.name;
  }
  m.set_train_mode(TrainMode::full);
  EXPECT_EQ(make_optimizer(m, c).slots().size(), m.named_parameters().size());
}

TEST_F(FitTest, FirstEpochBeatsUniformBaseline) {
  QAModel m = QAModel::init(small_model(vocab.size()), 6);
  TrainConfig c = quick();
  c.epochs = 1;
  fit(m, train, val, c);
  double loss = 0, baseline = 0;
  for (const auto& ex : train) {
    loss += m.loss(ex.input, ex.gold, {}).item();
    baseline += 4.0 * std::log(static_cast<double>(ex.input.context.size()));
  }
  EXPECT_LT(loss, baseline);
}

TEST_F(FitTest, EmptyInputsRejected) {
  QAModel m = QAModel::init(small_model(vocab.size()), 7);
  EXPECT_THROW(fit(m, {}, val, quick()), std::invalid_argument);
  EXPECT_THROW(fit(m, train, {}, quick()), std::invalid_argument);
}

TEST_F(FitTest, AccumulatedMicroBatchesEqualOneBigBatch) {
  QAModel m = QAModel::init(small_model(vocab.size()), 8);
  Rng rng(1);
  for (auto& la : m.adapters())
    for (LoRAAdapter* ad : {&la.query, &la.value})
      ad->b = Tensor::randn(ad->b.shape(), 0.1, rng).set_requires_grad(true);
  m.set_train_mode(TrainMode::lora);
  std::vector<Example> ex32(examples.begin(), examples.begin() + 32);
  auto big = batch_examples(ex32, 32, 0);
  std::vector<Batch> small;
  for (std::size_t k = 0; k < 4; ++k) {
    Batch b;
    for (std::size_t i = 8 * k; i < 8 * k + 8; ++i) {
      b.inputs.push_back(big[0].inputs[i]);
      b.golds.push_back(big[0].golds[i]);
      b.ids.push_back(big[0].ids[i]);
    }
    small.push_back(b);
  }
  auto params = m.trainable_parameters();
  auto grads = [&](std::span<const Batch> window) {
    for (auto& [_, t] : params) t.zero_grad();
    accumulate_gradients(m, window, 7, 0, true);
    std::vector<std::vector<double>> out;
    for (auto& [_, t] : params) out.emplace_back(t.grad().begin(), t.grad().end());
    return out;
  };
  auto g1 = grads(big), g4 = grads(small);
  for (std::size_t i = 0; i < g1.size(); ++i)
    for (std::size_t k = 0; k < g1[i].size(); ++k) ASSERT_NEAR(g1[i][k], g4[i][k], 1e-6) << params[i].first;
}

TEST(Threads, BudgetFromEnvironment) {
  ::setenv("DISAQA_THREADS", "3", 1);
  EXPECT_EQ(thread_budget(), 3u);
  ::setenv("DISAQA_THREADS", "zero", 1);
  EXPECT_EQ(thread_budget(), 1u);
  ::unsetenv("DISAQA_THREADS");
  EXPECT_EQ(thread_budget(), 1u);
}

TEST(Threads, EvaluationIndependentOfThreadCount) {
  auto recs = generate_synthetic(12, 4);
  Vocab v = build_vocab(corpus_texts(recs), 1);
  auto ex = encode_records(recs, v, 256).examples;
  QAModel m = QAModel::init(small_model(v.size()), 9);
  ::setenv("DISAQA_THREADS", "1", 1);
  auto a = evaluate_model(m, ex);
  ::setenv("DISAQA_THREADS", "4", 1);
  auto b = evaluate_model(m, ex);
  ::unsetenv("DISAQA_THREADS");
  EXPECT_EQ(nlohmann::json(a.metrics), nlohmann::json(b.metrics));
  for (std::size_t i = 0; i < ex.size(); ++i) EXPECT_EQ(a.predictions[i].score, b.predictions[i].score);
}

}  // namespace
}  // namespace disaqa
