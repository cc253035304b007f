// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "devmoe/autodiff/ops.hpp"
#include "devmoe/linalg/ops.hpp"
#include "devmoe/moe/expert_bank.hpp"
#include "devmoe/moe/routing.hpp"
#include "oracles.hpp"

namespace ad = devmoe::ad;
namespace la = devmoe::linalg;
namespace moe = devmoe::moe;
using la::Matrix;

namespace {

moe::LayerConfig small_config(moe::BankLayout layout = moe::BankLayout::RealAndFakes) {
  moe::LayerConfig c;
  c.d_in = 16;
  c.d_out = 24;
  c.rank = 2;
  c.layout = layout;
  return c;
}

void randomize_a(moe::DevMoeLayer& layer, std::uint64_t seed) {
  for (auto& e : layer.experts()) e.a = oracle::random_matrix(e.a.rows(), e.a.cols(), seed++);
}

double col_sum(const Matrix& m, std::size_t j) {
  double s = 0.0;
  for (std::size_t k = 0; k < m.rows(); ++k) s += m(k, j);
  return s;
}

}  // namespace

TEST(Expansion, FreshLayerThenExpand) {
  la::Rng rng(1);
  moe::DevMoeLayer layer(small_config(), rng);
  ASSERT_EQ(layer.experts().size(), 1u);
  EXPECT_EQ(layer.experts()[0].kind, moe::ExpertKind::Real);
  layer.expand_for_task(1, rng);
  ASSERT_EQ(layer.experts().size(), 2u);
  EXPECT_EQ(layer.experts()[1].kind, moe::ExpertKind::Fake);
  EXPECT_EQ(layer.experts()[1].task_id, 1u);
  EXPECT_FALSE(layer.experts()[1].frozen);
  EXPECT_FALSE(layer.experts()[0].frozen);
}

TEST(Expansion, FourExpansionsLeaveRealAndNewestFakeTrainable) {
  la::Rng rng(2);
  moe::DevMoeLayer layer(small_config(), rng);
  for (std::size_t t = 1; t <= 4; ++t) layer.expand_for_task(t, rng);
  ASSERT_EQ(layer.experts().size(), 5u);
  for (std::size_t k = 0; k < 5; ++k) {
    const bool trainable = k == 0 || k == 4;
    EXPECT_EQ(!layer.experts()[k].frozen, trainable) << "expert " << k;
  }
  EXPECT_EQ(layer.current_fake(), &layer.experts()[4]);
  EXPECT_NO_THROW(layer.validate());
}

TEST(Expansion, NewExpertHasZeroAAndScaledGaussianB) {
  la::Rng rng(3);
  moe::LayerConfig c = small_config();
  c.d_in = 64;
  c.d_out = 64;
  c.rank = 16;
  moe::DevMoeLayer layer(c, rng);
  layer.expand_for_task(1, rng);
  const moe::LoraExpert& e = layer.experts()[1];
  EXPECT_EQ(la::frob_sq(e.a), 0.0);
  EXPECT_EQ(la::frob_sq(e.delta_weight()), 0.0);
  const double var = la::frob_sq(e.b) / static_cast<double>(e.b.size());
  EXPECT_NEAR(var, 1.0 / 64.0, 0.2 / 64.0);
}

TEST(Expansion, DuplicateOrSkippedTaskIdThrows) {
  la::Rng rng(4);
  moe::DevMoeLayer layer(small_config(), rng);
  layer.expand_for_task(1, rng);
  EXPECT_THROW(layer.expand_for_task(1, rng), std::invalid_argument);
  EXPECT_THROW(layer.expand_for_task(3, rng), std::invalid_argument);
  EXPECT_NO_THROW(layer.expand_for_task(2, rng));
}

TEST(Expansion, RealOnlyLayoutCannotExpand) {
  la::Rng rng(5);
  moe::DevMoeLayer layer(small_config(moe::BankLayout::RealOnly), rng);
  EXPECT_THROW(layer.expand_for_task(1, rng), std::logic_error);
}

TEST(Expansion, SequenceLayoutGrowsRealAndFake) {
  la::Rng rng(6);
  moe::DevMoeLayer layer(small_config(moe::BankLayout::RealAndFakeSequences), rng);
  EXPECT_TRUE(layer.experts().empty());
  layer.expand_for_task(1, rng);
  layer.expand_for_task(2, rng);
  ASSERT_EQ(layer.experts().size(), 4u);
  EXPECT_EQ(layer.experts()[2].kind, moe::ExpertKind::Real);
  EXPECT_TRUE(layer.experts()[0].frozen);
  EXPECT_TRUE(layer.experts()[1].frozen);
  EXPECT_FALSE(layer.experts()[2].frozen);
  EXPECT_FALSE(layer.experts()[3].frozen);
}

TEST(Expansion, FakesOnlyHasNoReal) {
  la::Rng rng(7);
  moe::DevMoeLayer layer(small_config(moe::BankLayout::FakesOnly), rng);
  layer.expand_for_task(1, rng);
  ASSERT_EQ(layer.experts().size(), 1u);
  EXPECT_EQ(layer.experts()[0].kind, moe::ExpertKind::Fake);
}

TEST(LayerConfig, RankBoundEnforced) {
  la::Rng rng(8);
  moe::LayerConfig c = small_config();
  c.rank = 5;  // min(16, 24)/4 = 4
  EXPECT_THROW(moe::DevMoeLayer(c, rng), std::invalid_argument);
  c.rank = 4;
  EXPECT_NO_THROW(moe::DevMoeLayer(c, rng));
}

TEST(ParameterCounts, GrowthPerTaskIsRankTimesDims) {
  la::Rng rng(9);
  moe::DevMoeLayer layer(small_config(), rng);
  const std::size_t per = 2 * (16 + 24);
  EXPECT_EQ(layer.growth_per_task(), per);
  layer.expand_for_task(1, rng);
  const std::size_t trainable = layer.trainable_parameter_count();
  const std::size_t total = layer.total_parameter_count();
  layer.expand_for_task(2, rng);
  EXPECT_EQ(layer.trainable_parameter_count(), trainable);
  EXPECT_EQ(layer.total_parameter_count(), total + per);
}

TEST(Validate, DetectsBrokenInvariants) {
  la::Rng rng(10);
  moe::DevMoeLayer layer(small_config(), rng);
  layer.expand_for_task(1, rng);
  layer.expand_for_task(2, rng);
  layer.experts()[1].frozen = false;
  EXPECT_THROW(layer.validate(), std::logic_error);
  layer.experts()[1].frozen = true;
  layer.experts()[2].b = Matrix(3, 16);
  EXPECT_THROW(layer.validate(), std::logic_error);
}

TEST(Serialize, StableAndSensitive) {
  la::Rng rng(11);
  moe::DevMoeLayer layer(small_config(), rng);
  layer.expand_for_task(1, rng);
  moe::LoraExpert e = layer.experts()[1];
  const auto bytes = moe::serialize_expert(e);
  EXPECT_EQ(bytes, moe::serialize_expert(e));
  e.b(0, 0) = std::nextafter(e.b(0, 0), 1e9);
  EXPECT_NE(bytes, moe::serialize_expert(e));
}

TEST(CoefficientMatrix, DeltaValues) {
  la::Rng rng(12);
  moe::DevMoeLayer layer(small_config(), rng);
  layer.expand_for_task(1, rng);
  layer.expand_for_task(2, rng);
  const Matrix c = moe::coefficient_matrix(layer.experts(), {0, 1, 0}, 0.15);
  ASSERT_EQ(c.rows(), 3u);
  EXPECT_DOUBLE_EQ(c(0, 0), 1.15);
  EXPECT_DOUBLE_EQ(c(1, 0), 0.85);
  EXPECT_DOUBLE_EQ(c(2, 0), 0.85);
  EXPECT_DOUBLE_EQ(c(0, 1), 0.85);
  EXPECT_DOUBLE_EQ(c(2, 1), 1.15);
}

TEST(CoefficientMatrix, ZeroDeltaIsAllOnes) {
  la::Rng rng(13);
  moe::DevMoeLayer layer(small_config(), rng);
  layer.expand_for_task(1, rng);
  EXPECT_EQ(moe::coefficient_matrix(layer.experts(), {0, 1, 1, 0}, 0.0), Matrix(2, 4, 1.0));
}

TEST(CoefficientMatrix, AllFakeBatch) {
  la::Rng rng(14);
  moe::DevMoeLayer layer(small_config(), rng);
  for (std::size_t t = 1; t <= 3; ++t) layer.expand_for_task(t, rng);
  const Matrix c = moe::coefficient_matrix(layer.experts(), {1, 1, 1, 1, 1}, 0.15);
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_DOUBLE_EQ(c(0, j), 0.85);
    for (std::size_t k = 1; k < 4; ++k) EXPECT_DOUBLE_EQ(c(k, j), 1.15);
  }
}

TEST(CoefficientMatrix, RejectsNonBinaryLabels) {
  la::Rng rng(15);
  moe::DevMoeLayer layer(small_config(), rng);
  EXPECT_THROW((void)moe::coefficient_matrix(layer.experts(), {0, 2}, 0.15), std::invalid_argument);
}

TEST(GateScores, AllZeroOutputsGiveUniformGates) {
  ad::Tape t;
  const std::vector<ad::Var> outs{t.constant(Matrix(4, 6)), t.constant(Matrix(4, 6)), t.constant(Matrix(4, 6))};
  const ad::Var w = moe::gate_scores(outs, moe::GateReduction::Mean);
  EXPECT_EQ(w.value(), Matrix(3, 6));
  const Matrix g = ad::softmax_cols(w, 1.0).value();
  for (double v : g.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(GateScores, MeanAndL2Reductions) {
  ad::Tape t;
  const Matrix o = Matrix::from_rows({{3, 1}, {4, -1}});
  const std::vector<ad::Var> outs{t.constant(o)};
  const Matrix mean = moe::gate_scores(outs, moe::GateReduction::Mean).value();
  EXPECT_DOUBLE_EQ(mean(0, 0), 3.5);
  EXPECT_DOUBLE_EQ(mean(0, 1), 0.0);
  const Matrix l2 = moe::gate_scores(outs, moe::GateReduction::L2Norm).value();
  EXPECT_DOUBLE_EQ(l2(0, 0), 5.0);
  EXPECT_DOUBLE_EQ(l2(0, 1), std::sqrt(2.0));
}

TEST(GateScores, UniformlyLargerOutputWinsEveryToken) {
  ad::Tape t;
  const Matrix base = oracle::random_matrix(5, 7, 16);
  Matrix bigger = base;
  for (double& v : bigger.values()) v += 0.4;
  const std::vector<ad::Var> outs{t.constant(base), t.constant(bigger), t.constant(base)};
  const Matrix g = ad::softmax_cols(moe::gate_scores(outs, moe::GateReduction::Mean), 1.0).value();
  for (std::size_t j = 0; j < 7; ++j) {
    EXPECT_GT(g(1, j), g(0, j));
    EXPECT_GT(g(1, j), g(2, j));
  }
}

TEST(ResponseMatrix, UniformGatesTwoExperts) {
  ad::Tape t;
  const Matrix i = moe::response_matrix(t.constant(Matrix(2, 24, 0.5)), 8).value();
  EXPECT_EQ(i, Matrix(2, 3, 4.0));
}

TEST(ResponseMatrix, SingleTokenEqualsGates) {
  ad::Tape t;
  const Matrix g = ad::softmax_cols(t.constant(oracle::random_matrix(3, 5, 17)), 1.0).value();
  EXPECT_EQ(moe::response_matrix(t.constant(g), 1).value(), g);
}

TEST(MoeForward, SingleExpertReturnsItsOutput) {
  la::Rng rng(18);
  moe::DevMoeLayer layer(small_config(moe::BankLayout::RealOnly), rng);
  randomize_a(layer, 19);
  const Matrix h = oracle::random_matrix(16, 12, 20);
  const moe::MoeValues v = moe::moe_forward(layer, h, 4);
  const Matrix expect = la::matmul(layer.experts()[0].delta_weight(), h);
  EXPECT_LE(la::max_abs_diff(v.mixed, expect), 1e-12);
  for (double g : v.gates.values()) EXPECT_EQ(g, 1.0);
}

TEST(MoeForward, TwoIdenticalExpertsEqualEither) {
  la::Rng rng(21);
  moe::DevMoeLayer layer(small_config(), rng);
  layer.expand_for_task(1, rng);
  randomize_a(layer, 22);
  layer.experts()[1].a = layer.experts()[0].a;
  layer.experts()[1].b = layer.experts()[0].b;
  const Matrix h = oracle::random_matrix(16, 8, 23);
  const moe::MoeValues v = moe::moe_forward(layer, h, 4);
  EXPECT_LE(la::max_abs_diff(v.mixed, la::matmul(layer.experts()[0].delta_weight(), h)), 1e-12);
}

TEST(MoeForward, SingleTokenMatchesLiteralResponseProduct) {
  // With T = 1 the mixed output equals Σ_k I[k, l]·O_k[:, l], i.e. IᵀO per column.
  la::Rng rng(24);
  moe::DevMoeLayer layer(small_config(), rng);
  layer.expand_for_task(1, rng);
  layer.expand_for_task(2, rng);
  randomize_a(layer, 25);
  const Matrix h = oracle::random_matrix(16, 6, 26);
  const moe::MoeValues v = moe::moe_forward(layer, h, 1);
  Matrix expect(24, 6);
  for (std::size_t k = 0; k < layer.experts().size(); ++k) {
    const Matrix o = oracle::naive_matmul(layer.experts()[k].delta_weight(), h);
    for (std::size_t j = 0; j < 6; ++j)
      for (std::size_t i = 0; i < 24; ++i) expect(i, j) += v.response(k, j) * o(i, j);
  }
  EXPECT_LE(la::max_abs_diff(v.mixed, expect), 1e-12);
}

TEST(MoeForward, GateAndResponseNormalizationOverRandomBatches) {
  std::mt19937_64 gen(27);
  for (int batch = 0; batch < 50; ++batch) {
    la::Rng rng(gen());
    moe::DevMoeLayer layer(small_config(), rng);
    const std::size_t fakes = gen() % 5;
    for (std::size_t t = 1; t <= fakes; ++t) layer.expand_for_task(t, rng);
    randomize_a(layer, gen());
    const std::size_t tokens = 1 + gen() % 8;
    const std::size_t n = 1 + gen() % 6;
    const moe::MoeValues v = moe::moe_forward(layer, oracle::random_matrix(16, n * tokens, gen(), 2.0), tokens);
    for (std::size_t j = 0; j < v.gates.cols(); ++j) ASSERT_NEAR(col_sum(v.gates, j), 1.0, 1e-9);
    for (std::size_t l = 0; l < n; ++l) ASSERT_NEAR(col_sum(v.response, l), static_cast<double>(tokens), 1e-9);
    for (double r : v.response.values()) ASSERT_GE(r, 0.0);
  }
}

TEST(MoeForward, NewExpertContributesNothingAndRescalesOthers) {
  la::Rng rng(28);
  moe::DevMoeLayer layer(small_config(), rng);
  layer.expand_for_task(1, rng);
  randomize_a(layer, 29);
  const Matrix h = oracle::random_matrix(16, 16, 30);
  const moe::MoeValues before = moe::moe_forward(layer, h, 4);
  layer.expand_for_task(2, rng);
  const moe::MoeValues after = moe::moe_forward(layer, h, 4);
  for (std::size_t j = 0; j < h.cols(); ++j)
    for (std::size_t i = 0; i < 24; ++i)
      EXPECT_NEAR(after.mixed(i, j), before.mixed(i, j) * (1.0 - after.gates(2, j)), 1e-12);
}

TEST(ComposedWeight, UnitGateSumEqualsMergedWeight) {
  la::Rng rng(31);
  moe::DevMoeLayer layer(small_config(), rng);
  for (std::size_t t = 1; t <= 3; ++t) layer.expand_for_task(t, rng);
  randomize_a(layer, 32);
  const Matrix w = oracle::random_matrix(24, 16, 33);
  const Matrix x = oracle::random_matrix(16, 5, 34);
  Matrix lhs = la::matmul(w, x);
  Matrix merged = w;
  for (const auto& e : layer.experts()) {
    la::axpy(lhs, la::matmul(e.a, la::matmul(e.b, x)));
    la::axpy(merged, e.delta_weight());
  }
  EXPECT_LE(la::max_abs_diff(lhs, la::matmul(merged, x)), 1e-10);
}
