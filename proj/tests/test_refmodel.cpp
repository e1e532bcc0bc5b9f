// Copyright 2026 The shiftnl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "shiftnl/errors.hpp"
#include "shiftnl/refmodel.hpp"
#include "support/oracles.hpp"

using namespace shiftnl;

TEST(Oracles, SoftmaxOfEqualPair) {
  const std::vector<double> x{0.0, 0.0};
  const auto p = exact_softmax(x);
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(Oracles, GeluErfAtThree) {
  // 3 * Phi(3), Phi(3) = 0.998650...
  EXPECT_NEAR(exact_gelu_erf(3.0), 2.99595, 1e-5);
  EXPECT_NEAR(exact_gelu_sigmoid(1.0), 0.8458, 1e-4);
}

TEST(Oracles, LayerNormOfUnitPair) {
  const std::vector<double> x{-1.0, 1.0};
  EXPECT_EQ(exact_layernorm(x), x);
  const std::vector<double> c(4, 3.0);
  EXPECT_EQ(exact_layernorm(c), std::vector<double>(4, 0.0));
}

TEST(Oracles, SigmoidFormOfGeluWithinKnownBound) {
  double worst = 0.0;
  for (double x = -6.0; x <= 6.0; x += 1e-3) {
    worst = std::max(worst, std::fabs(exact_gelu_sigmoid(x) - oracle::gelu_erf(x)));
  }
  EXPECT_LE(worst, 0.021);
}

TEST(Domain, Parse) {
  const Domain d = Domain::parse("-6:6:0.001");
  EXPECT_EQ(d.lo, -6.0);
  EXPECT_EQ(d.hi, 6.0);
  EXPECT_EQ(d.points().size(), 12001u);
  EXPECT_EQ(d.to_string(), "-6:6:0.001");
  const Domain i = Domain::parse("int8");
  EXPECT_TRUE(i.int8_grid);
  EXPECT_EQ(i.points().size(), 256u);
  EXPECT_EQ(i.points().front(), -128.0);
  EXPECT_THROW(Domain::parse("1:0:0.1"), ContractError);
  EXPECT_THROW(Domain::parse("0:1:0"), ContractError);
  EXPECT_THROW(Domain::parse("0:1"), ContractError);
  EXPECT_THROW(Domain::parse("a:b:c"), ContractError);
}

TEST(Sweep, ExpRelativeErrorInExpectedBand) {
  const ErrorReport r = sweep_error(Kernel::kExp, Domain::parse("-8:0:0.001"));
  EXPECT_EQ(r.samples, 8001u);
  EXPECT_GE(r.max_rel_error, 0.02);
  EXPECT_LE(r.max_rel_error, 0.05);
  EXPECT_LE(r.mean_squared_error, r.max_abs_error * r.max_abs_error);
}

TEST(Sweep, GeluAbsoluteErrorBelowBound) {
  const ErrorReport r = sweep_error(Kernel::kGelu, Domain::parse("-6:6:0.001"));
  EXPECT_LE(r.max_abs_error, 0.03);
  EXPECT_NEAR(std::fabs(r.argmax_abs), 2.4, 0.05);
}

TEST(Sweep, Deterministic) {
  const Domain d = Domain::parse("1:64:0.05");
  const ErrorReport a = sweep_error(Kernel::kLn, d, {kQ16_16, false, true});
  const ErrorReport b = sweep_error(Kernel::kLn, d, {kQ16_16, false, true});
  EXPECT_EQ(a.max_abs_error, b.max_abs_error);
  EXPECT_EQ(a.mean_squared_error, b.mean_squared_error);
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) EXPECT_EQ(a.points[i].approx, b.points[i].approx);
}

TEST(Sweep, PreconditionsSurface) {
  EXPECT_THROW(sweep_error(Kernel::kExp, Domain::parse("0:1:0.1")), ContractError);
  EXPECT_NO_THROW(sweep_error(Kernel::kExp, Domain::parse("0:1:0.1"), {kQ16_16, true, false}));
  EXPECT_THROW(sweep_error(Kernel::kLn, Domain::parse("0:1:0.1")), DomainError);
  EXPECT_THROW(sweep_error(Kernel::kIsqrt, Domain::parse("-1:1:0.5")), DomainError);
}

TEST(Sweep, VectorKernelsOnInt8Grid) {
  for (Kernel k : {Kernel::kSoftmax, Kernel::kLayerNorm, Kernel::kSigmoid, Kernel::kGelu}) {
    const ErrorReport r = sweep_error(k, Domain::parse("int8"));
    EXPECT_EQ(r.samples, 256u);
    EXPECT_GE(r.max_abs_error, 0.0);
    EXPECT_LE(r.mean_squared_error, r.max_abs_error * r.max_abs_error);
  }
}

TEST(Block, SameSeedSameWeights) {
  const SyntheticBlock a = SyntheticBlock::make({}, 7);
  const SyntheticBlock b = SyntheticBlock::make({}, 7);
  const SyntheticBlock c = SyntheticBlock::make({}, 8);
  EXPECT_EQ(a.wq, b.wq);
  EXPECT_EQ(a.w2, b.w2);
  EXPECT_EQ(a.ln2_gamma, b.ln2_gamma);
  EXPECT_NE(a.wq, c.wq);
  EXPECT_EQ(a.sample_input(3), b.sample_input(3));
}

TEST(Block, DefaultDimensions) {
  const SyntheticBlock b = SyntheticBlock::make({}, 1);
  EXPECT_EQ(b.wq.rows, 32u);
  EXPECT_EQ(b.w1.cols, 64u);
  EXPECT_EQ(b.sample_input(0).rows, 16u);
}

TEST(Block, DimensionMismatchIsError) {
  const SyntheticBlock b = SyntheticBlock::make({}, 1);
  EXPECT_THROW(forward_block(b, Matrix(16, 31), Mode::kFloat), ContractError);
  EXPECT_THROW(SyntheticBlock::make({16, 3, 32, 64}, 1), ContractError);
}

TEST(Block, IntegerKernelsAloneTrackFloat) {
  const SyntheticBlock b = SyntheticBlock::make({}, 42);
  const Matrix x = b.sample_input(42);
  const ForwardResult f = forward_block(b, x, Mode::kFloat);
  const ForwardResult i = forward_block(b, x, Mode::kInteger);
  EXPECT_GE(cosine_similarity(f.output.data, i.output.data), 0.999);
  EXPECT_FALSE(i.fixed_point_overflow);
  EXPECT_EQ(i.softmax_ops.divides + i.gelu_ops.divides + i.layernorm_ops.divides, 0u);
  EXPECT_GT(i.softmax_ops.mults, 0u);
}

TEST(Block, IntegerModeBitIdenticalAcrossRuns) {
  const SyntheticBlock b = SyntheticBlock::make({}, 42);
  const SimulationResult r1 = simulate_block(b, {8, 8, 99.9}, 42);
  const SimulationResult r2 = simulate_block(SyntheticBlock::make({}, 42), {8, 8, 99.9}, 42);
  EXPECT_EQ(r1.integer.output, r2.integer.output);
  EXPECT_EQ(r1.cosine_similarity, r2.cosine_similarity);
}

TEST(Block, Int8GroupedPipelineCloseToFloat) {
  const SimulationResult r = simulate_block(SyntheticBlock::make({}, 42), {8, 8, 99.9}, 42);
  EXPECT_GE(r.cosine_similarity, 0.99);
  EXPECT_LE(r.max_rel_error, 1.0);
}

TEST(Block, WideCodesPerChannelGroupsNearlyLossless) {
  // b = 32 with one group per channel leaves only kernel approximation error.
  const SyntheticBlock b = SyntheticBlock::make({}, 42);
  const SimulationResult r = simulate_block(b, {32, 64, 99.9}, 42);
  EXPECT_GE(r.cosine_similarity, 0.999);
}

TEST(Block, GroupingHelpsHeavyTailedPreset) {
  const SyntheticBlock b = SyntheticBlock::make({}, 42, Preset::kHeavyTailed);
  for (int bits : {4, 8}) {
    const double grouped = simulate_block(b, {bits, 8, 99.9}, 42).cosine_similarity;
    const double flat = simulate_block(b, {bits, 1, 99.9}, 42).cosine_similarity;
    EXPECT_GE(grouped, flat) << bits;
  }
}

TEST(Block, HeavyTailedPresetSpansTwoDecades) {
  const SyntheticBlock b = SyntheticBlock::make({}, 42, Preset::kHeavyTailed);
  SiteActivations acts;
  const BlockPlans* none = nullptr;
  forward_block(b, b.sample_input(42), Mode::kFloat, none, &acts);
  const std::vector<double> m = channel_max_abs(acts.gelu);
  const auto [lo, hi] = std::minmax_element(m.begin(), m.end());
  EXPECT_GE(*hi / std::max(*lo, 1e-12), 100.0);
}

TEST(Block, PresetNames) {
  EXPECT_EQ(parse_preset("heavy_tailed"), Preset::kHeavyTailed);
  EXPECT_EQ(preset_name(Preset::kStandard), "standard");
  EXPECT_THROW(parse_preset("gaussian"), ContractError);
}

TEST(Cosine, Basics) {
  const std::vector<double> a{1, 0}, b{0, 1}, c{2, 0};
  EXPECT_DOUBLE_EQ(cosine_similarity(a, b), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(a, c), 1.0);
  EXPECT_THROW(cosine_similarity(a, std::vector<double>{1}), ContractError);
}
