// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "disaqa/grad_check.hpp"
#include "disaqa/tensor.hpp"
#include "test_util.hpp"

namespace disaqa {
namespace {

using testing::param;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor m({2, 2}, {5, 6, 7, 8});
  Tensor r = matmul(eye, m);
  EXPECT_EQ(std::vector<double>(r.values().begin(), r.values().end()),
            (std::vector<double>{5, 6, 7, 8}));
}

TEST(Matmul, RowTimesColumn) {
  EXPECT_DOUBLE_EQ(matmul(Tensor({1, 2}, {1, 2}), Tensor({2, 1}, {3, 4})).item(), 11.0);
}

TEST(Matmul, ZerosAnnihilate) {
  Rng rng(1);
  Tensor r = matmul(Tensor({2, 3}), Tensor::randn({3, 4}, 1.0, rng));
  EXPECT_EQ(r.shape(), (Shape{2, 4}));
  for (double v : r.values()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor({2, 3}), Tensor({4, 5}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4,5]"), std::string::npos) << msg;
  }
}

TEST(Matmul, NtMatchesExplicitTranspose) {
  Rng rng(2);
  Tensor a = Tensor::randn({3, 4}, 1.0, rng), b = Tensor::randn({5, 4}, 1.0, rng);
  EXPECT_LT(testing::max_abs_diff(matmul_nt(a, b), matmul(a, transpose(b))), 1e-14);
}

TEST(Softmax, SymmetricInputIsUniform) {
  Tensor s = softmax(Tensor({2}, {0, 0}));
  EXPECT_DOUBLE_EQ(s.at(0), 0.5);
  EXPECT_DOUBLE_EQ(s.at(1), 0.5);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  Tensor s = softmax(Tensor({2}, {1000, 0}));
  EXPECT_NEAR(s.at(0), 1.0, 1e-12);
  EXPECT_NEAR(s.at(1), 0.0, 1e-12);
  Tensor t = softmax(Tensor({3}, {1e4, -1e4, 0}));
  for (double v : t.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Softmax, LogsOfIntegersGiveProportions) {
  Tensor s = softmax(Tensor({3}, {std::log(1.0), std::log(2.0), std::log(3.0)}));
  EXPECT_NEAR(s.at(0), 1.0 / 6, 1e-15);
  EXPECT_NEAR(s.at(1), 2.0 / 6, 1e-15);
  EXPECT_NEAR(s.at(2), 3.0 / 6, 1e-15);
}

TEST(Softmax, EmptyAxisThrows) { EXPECT_ANY_THROW(softmax(Tensor(Shape{0}))); }

TEST(Softmax, RowsSumToOne) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor s = softmax(Tensor::randn({4, 7}, 10.0, rng));
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0;
      for (std::size_t c = 0; c < 7; ++c) total += s.at(r, c);
      EXPECT_NEAR(total, 1.0, 1e-9);
    }
  }
}

TEST(MaskedSoftmax, MaskedEntriesGetExactlyZero) {
  std::vector<std::uint8_t> mask{1, 0, 1};
  Tensor s = masked_softmax(Tensor({2, 3}, {1, 50, 1, 0, 3, 0}), mask);
  EXPECT_EQ(s.at(0, 1), 0.0);
  EXPECT_EQ(s.at(1, 1), 0.0);
  EXPECT_NEAR(s.at(0, 0), 0.5, 1e-15);
}

TEST(MaskedSoftmax, FullyMaskedRowThrows) {
  std::vector<std::uint8_t> mask{0, 0};
  EXPECT_ANY_THROW(masked_softmax(Tensor({1, 2}), mask));
}

TEST(LayerNorm, ConstantRowBecomesZero) {
  Tensor y = layer_norm(Tensor({1, 4}, 3.0), Tensor({4}, 1.0), Tensor({4}, 0.0), 1e-12);
  for (double v : y.values()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(LayerNorm, PlusMinusOneIsAlreadyNormal) {
  Tensor y = layer_norm(Tensor({1, 2}, {1, -1}), Tensor({2}, 1.0), Tensor({2}, 0.0), 1e-12);
  EXPECT_NEAR(y.at(0), 1.0, 1e-10);
  EXPECT_NEAR(y.at(1), -1.0, 1e-10);
}

TEST(LayerNorm, ZeroGainGivesBeta) {
  Rng rng(4);
  Tensor beta({3}, {0.5, -2, 7});
  Tensor y = layer_norm(Tensor::randn({5, 3}, 1.0, rng), Tensor({3}, 0.0), beta, 1e-12);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(y.at(r, c), beta.at(c));
}

TEST(LayerNorm, RowMeanVanishes) {
  Rng rng(5);
  Tensor y = layer_norm(Tensor::randn({6, 16}, 4.0, rng), Tensor({16}, 1.0), Tensor({16}, 0.0), 1e-12);
  for (std::size_t r = 0; r < 6; ++r) {
    double m = 0;
    for (std::size_t c = 0; c < 16; ++c) m += y.at(r, c);
    EXPECT_LT(std::abs(m / 16), 1e-7);
  }
}

TEST(CrossEntropy, UniformLogitsGiveLogL) {
  EXPECT_NEAR(cross_entropy(Tensor({4}, 0.0), 2).item(), std::log(4.0), 1e-15);
}

TEST(CrossEntropy, DominantTargetGivesZero) {
  EXPECT_NEAR(cross_entropy(Tensor({3}, {1e4, 0, 0}), 0).item(), 0.0, 1e-12);
}

TEST(CrossEntropy, HandCase) {
  EXPECT_NEAR(cross_entropy(Tensor({2}, {0, std::log(3.0)}), 0).item(), std::log(4.0), 1e-15);
}

TEST(CrossEntropy, TargetOutOfRangeThrowsIndexError) {
  EXPECT_THROW(cross_entropy(Tensor({3}), 3), IndexError);
}

TEST(GradCheck, QuadraticIsExact) {
  Tensor x = Tensor({1}, {3.0}).set_requires_grad(true);
  auto r = grad_check([&] { return sum(mul(x, x)); }, {{"x", x}});
  EXPECT_LT(r.max_rel_error, 1e-8);
  EXPECT_NEAR(x.grad()[0], 6.0, 1e-12);
}

TEST(GradCheck, SoftmaxCrossEntropyOverFiveLogits) {
  Rng rng(6);
  Tensor z = param({5}, rng);
  auto r = grad_check([&] { return cross_entropy(z, 3); }, {{"z", z}});
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(GradCheck, FrozenParameterReportsZero) {
  Tensor x = Tensor({2}, {1, 2});
  Tensor y = Tensor({2}, {3, 4}).set_requires_grad(true);
  auto r = grad_check([&] { return sum(mul(x, y)); }, {{"x", x}, {"y", y}});
  EXPECT_EQ(r.analytic_norms.at("x"), 0.0);
  EXPECT_EQ(r.per_param_errors.at("x"), 0.0);
}

TEST(GradCheck, MaxIsOverPerParamErrors) {
  Rng rng(7);
  Tensor a = param({3, 3}, rng), b = param({3}, rng);
  auto r = grad_check([&] { return sum(tanh(add_bias(a, b))); }, {{"a", a}, {"b", b}});
  double m = 0;
  for (const auto& [_, e] : r.per_param_errors) m = std::max(m, e);
  EXPECT_EQ(r.max_rel_error, m);
}

TEST(GradCheck, RejectsBadEpsAndNonFiniteLoss) {
  Tensor x = Tensor({1}, {1.0}).set_requires_grad(true);
  GradCheckOptions o;
  o.eps = 1e-2;
  EXPECT_ANY_THROW(grad_check([&] { return sum(x); }, {{"x", x}}, o));
  EXPECT_ANY_THROW(
      grad_check([&] { return scale(sum(x), std::numeric_limits<double>::infinity()); }, {{"x", x}}));
}

// Every differentiable op against central differences on small random inputs.
struct OpCase {
  const char* name;
  std::function<Tensor(const Tensor&, const Tensor&)> fn;
  Shape a, b;
};

class OpGradients : public ::testing::TestWithParam<OpCase> {};

TEST_P(OpGradients, MatchFiniteDifferences) {
  const OpCase& c = GetParam();
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(100 + seed);
    Tensor a = param(c.a, rng), b = param(c.b, rng);
    Tensor w = Tensor::randn(c.fn(a, b).shape(), 1.0, rng);  // fixed projection to a scalar
    auto loss = [&] { return sum(mul(c.fn(a, b), w)); };
    auto r = grad_check(loss, {{"a", a}, {"b", b}});
    EXPECT_LT(r.max_rel_error, 1e-4) << c.name << " worst " << r.worst_param;
  }
}

INSTANTIATE_TEST_SUITE_P(
    AllOps, OpGradients,
    ::testing::Values(
        OpCase{"matmul", [](auto& a, auto& b) { return matmul(a, b); }, {3, 4}, {4, 2}},
        OpCase{"matmul_nt", [](auto& a, auto& b) { return matmul_nt(a, b); }, {3, 4}, {5, 4}},
        OpCase{"transpose", [](auto& a, auto& b) { return add(transpose(a), b); }, {2, 3}, {3, 2}},
        OpCase{"add", [](auto& a, auto& b) { return add(a, b); }, {2, 3}, {2, 3}},
        OpCase{"sub", [](auto& a, auto& b) { return sub(a, b); }, {2, 3}, {2, 3}},
        OpCase{"mul", [](auto& a, auto& b) { return mul(a, b); }, {2, 3}, {2, 3}},
        OpCase{"scale", [](auto& a, auto& b) { return add(scale(a, -1.7), b); }, {4}, {4}},
        OpCase{"add_bias", [](auto& a, auto& b) { return add_bias(a, b); }, {3, 2}, {2}},
        OpCase{"tanh", [](auto& a, auto& b) { return tanh(mul(a, b)); }, {5}, {5}},
        OpCase{"sigmoid", [](auto& a, auto& b) { return sigmoid(mul(a, b)); }, {5}, {5}},
        OpCase{"gelu", [](auto& a, auto& b) { return gelu(add(a, b)); }, {2, 4}, {2, 4}},
        OpCase{"softmax", [](auto& a, auto& b) { return softmax(add(a, b)); }, {3, 4}, {3, 4}},
        OpCase{"log_softmax", [](auto& a, auto& b) { return log_softmax(mul(a, b)); }, {6}, {6}},
        OpCase{"masked_softmax",
               [](auto& a, auto& b) {
                 static const std::vector<std::uint8_t> m{1, 1, 0, 1};
                 return masked_softmax(add(a, b), m);
               },
               {3, 4}, {3, 4}},
        OpCase{"layer_norm",
               [](auto& a, auto& b) { return layer_norm(a, b, slice(b, 0, 0, 4), 1e-5); },
               {3, 4}, {4}},
        OpCase{"cross_entropy",
               [](auto& a, auto& b) { return reshape(cross_entropy(add(a, b), 2), {1}); },
               {5}, {5}},
        OpCase{"embedding",
               [](auto& a, auto& b) {
                 static const std::vector<std::int32_t> ids{2, 0, 2, 1};
                 return add_bias(embedding(a, ids), b);
               },
               {3, 4}, {4}},
        OpCase{"concat0", [](auto& a, auto& b) { return concat({a, b, a}, 0); }, {2, 3}, {1, 3}},
        OpCase{"concat1", [](auto& a, auto& b) { return concat({a, b}, 1); }, {2, 3}, {2, 2}},
        OpCase{"slice", [](auto& a, auto& b) { return mul(slice(a, 1, 1, 3), b); }, {2, 4}, {2, 2}},
        OpCase{"reshape", [](auto& a, auto& b) { return mul(reshape(a, {3, 2}), b); }, {2, 3}, {3, 2}},
        OpCase{"mean", [](auto& a, auto& b) { return reshape(mul(mean(a), sum(b)), {1}); }, {2, 3}, {4}}),
    [](const ::testing::TestParamInfo<OpCase>& info) { return std::string(info.param.name); });

TEST(Dropout, RateZeroAndEvalAreIdentity) {
  Rng rng(8);
  Tensor x = Tensor::randn({4, 5}, 1.0, rng);
  Rng r1(1), r2(1);
  EXPECT_EQ(testing::max_abs_diff(dropout(x, 0.0, true, r1), x), 0.0);
  EXPECT_EQ(testing::max_abs_diff(dropout(x, 0.9, false, r2), x), 0.0);
}

TEST(Dropout, InvertedScalingAndSeedDeterminism) {
  Tensor x({1000}, 1.0);
  Rng r1(9), r2(9);
  Tensor a = dropout(x, 0.25, true, r1), b = dropout(x, 0.25, true, r2);
  EXPECT_EQ(testing::max_abs_diff(a, b), 0.0);
  std::size_t kept = 0;
  for (double v : a.values()) {
    if (v != 0.0) {
      EXPECT_DOUBLE_EQ(v, 1.0 / 0.75);
      ++kept;
    }
  }
  EXPECT_GT(kept, 650u);
  EXPECT_LT(kept, 850u);
}

TEST(Embedding, OutOfRangeIdThrows) {
  std::vector<std::int32_t> ids{3};
  EXPECT_THROW(embedding(Tensor({3, 2}), ids), IndexError);
}

TEST(Tape, NoGradGuardSkipsRecording) {
  Tensor x = Tensor({2}, {1, 2}).set_requires_grad(true);
  {
    NoGradGuard g;
    EXPECT_FALSE(grad_enabled());
    EXPECT_FALSE(mul(x, x).requires_grad());
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_TRUE(mul(x, x).requires_grad());
}

TEST(Tape, GradientsAccumulateAcrossBackwardCalls) {
  Tensor x = Tensor({1}, {2.0}).set_requires_grad(true);
  sum(mul(x, x)).backward();
  sum(mul(x, x)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
  x.zero_grad();
  EXPECT_DOUBLE_EQ(x.grad().empty() ? 0.0 : x.grad()[0], 0.0);
}

TEST(Tape, DeepChainDoesNotOverflowTheStack) {
  Tensor x = Tensor({1}, {1.0}).set_requires_grad(true);
  Tensor y = x;
  for (int i = 0; i < 200000; ++i) y = scale(y, 1.0);
  sum(y).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 1.0);
}

TEST(Invariants, NumelMatchesShape) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  Tensor t({3, 4});
  EXPECT_EQ(t.numel(), 12u);
}

}  // namespace
}  // namespace disaqa
