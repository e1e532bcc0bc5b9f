// Copyright 2026 The shiftnl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "shiftnl/calib.hpp"
#include "shiftnl/errors.hpp"
#include "shiftnl/refmodel.hpp"
#include "support/oracles.hpp"

using namespace shiftnl;

namespace {

AllocationProblem random_problem(std::mt19937_64& rng, std::int64_t* budget_out) {
  const std::vector<std::size_t> candidates{1, 2, 4, 8};
  AllocationProblem p;
  p.bits = (rng() % 2) ? 4 : 8;
  const std::size_t layers = 1 + rng() % 4;
  std::int64_t max_bop = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    LayerCandidates lc;
    lc.channels = 8 * (1 + rng() % 12);
    lc.group_counts = feasible_group_counts(candidates, lc.channels);
    double c = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
    for (std::size_t i = 0; i < lc.group_counts.size(); ++i) {
      lc.costs.push_back(c);
      c *= std::uniform_real_distribution<double>(0.3, 1.05)(rng);
    }
    max_bop += bop_cost(lc.channels, p.bits, lc.group_counts.back());
    p.layers.push_back(std::move(lc));
  }
  const std::int64_t budget = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(max_bop + 1));
  p.budget = budget;
  *budget_out = budget;
  return p;
}

std::vector<oracle::BruteLayer> to_brute(const AllocationProblem& p) {
  std::vector<oracle::BruteLayer> out;
  for (const LayerCandidates& lc : p.layers) out.push_back({lc.channels, lc.group_counts, lc.costs});
  return out;
}

}  // namespace

TEST(Moments, StreamingMatchesTwoPassOnMillionElements) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> d(3.0, 7.0);
  std::vector<double> x(1000000);
  RunningMoments m;
  for (double& v : x) {
    v = d(rng);
    m.push(v);
  }
  const oracle::Moments ref = oracle::two_pass(x);
  EXPECT_NEAR(m.mean(), ref.mean, 1e-9 * std::fabs(ref.mean));
  EXPECT_NEAR(m.variance(), ref.variance, 1e-9 * ref.variance);
}

TEST(Stats, PerChannelValues) {
  Matrix a(2, 2);
  a.data = {1, -4, 3, 4};
  Matrix b(1, 2);
  b.data = {5, 0};
  const std::vector<Matrix> s{a, b};
  const LayerStats st = collect_stats(s, 16);
  ASSERT_EQ(st.channels.size(), 2u);
  EXPECT_DOUBLE_EQ(st.channels[0].mean, 3.0);
  EXPECT_DOUBLE_EQ(st.channels[0].variance, 8.0 / 3.0);
  EXPECT_DOUBLE_EQ(st.channels[1].min, -4.0);
  EXPECT_DOUBLE_EQ(st.channels[1].max_abs(), 4.0);
  EXPECT_EQ(st.channels[0].sample_count, 3u);
  EXPECT_DOUBLE_EQ(st.global_min, -4.0);
  EXPECT_DOUBLE_EQ(st.global_max, 5.0);
  EXPECT_EQ(st.histogram.total(), 6u);
  EXPECT_EQ(st.histogram.counts.front(), 1u);
  EXPECT_EQ(st.histogram.counts.back(), 1u);
}

TEST(Stats, InconsistentChannelsRejected) {
  const std::vector<Matrix> s{Matrix(2, 3), Matrix(2, 4)};
  EXPECT_THROW(collect_stats(s), ContractError);
  EXPECT_THROW(collect_stats(std::vector<Matrix>{}), ContractError);
}

TEST(Stats, ConstantSampleIsDegenerateButValid) {
  const std::vector<Matrix> s{Matrix(4, 3, 2.5)};
  const LayerStats st = collect_stats(s);
  EXPECT_EQ(st.global_min, st.global_max);
  EXPECT_EQ(st.histogram.counts[0], 12u);
  EXPECT_EQ(st.channels[1].variance, 0.0);
}

TEST(Kl, IdenticalIsZero) {
  const std::vector<double> p{1, 2, 3, 0};
  EXPECT_NEAR(kl_divergence(p, p), 0.0, 1e-15);
}

TEST(Kl, ClosedFormTwoBins) {
  const std::vector<double> p{1, 1};
  const std::vector<double> q{1, 3};
  const double exact = 0.5 * std::log(0.5 / 0.25) + 0.5 * std::log(0.5 / 0.75);
  EXPECT_NEAR(kl_divergence(p, q, 0.0), exact, 1e-15);
}

TEST(Kl, SmoothedMatchesOracle) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> p(64), q(64);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = static_cast<double>(rng() % 5);
      q[i] = static_cast<double>(rng() % 5);
    }
    p[0] += 1;
    q[0] += 1;
    EXPECT_NEAR(kl_divergence(p, q), oracle::kl(p, q, kKlSmoothing), 1e-12);
  }
}

TEST(Kl, CostDropsWithMoreGroupsOnHeavyTails) {
  const std::vector<Matrix> s{heavy_tailed_activations(256, 32, 4)};
  const LayerStats st = collect_stats(s);
  EXPECT_LT(kl_cost(st, s, 8, 4, 99.9), kl_cost(st, s, 1, 4, 99.9));
}

TEST(Bop, CostFormula) {
  EXPECT_EQ(bop_cost(64, 8, 1), 0);
  EXPECT_EQ(bop_cost(64, 8, 8), 64 * 8 * 3);
  EXPECT_THROW(bop_cost(64, 8, 3), ContractError);
}

TEST(Bop, FeasibleCounts) {
  const std::vector<std::size_t> c{2, 4, 8, 16, 3};
  EXPECT_EQ(feasible_group_counts(c, 6), (std::vector<std::size_t>{1, 2, 4}));
}

TEST(Allocate, ZeroBudgetForcesSingleGroups) {
  AllocationProblem p;
  for (int l = 0; l < 3; ++l) p.layers.push_back({16, {1, 2, 4}, {1.0, 0.5, 0.1}});
  p.budget = 0;
  const Allocation a = allocate_groups(p);
  EXPECT_EQ(a.groups, (std::vector<std::size_t>{1, 1, 1}));
  EXPECT_EQ(a.total_bop, 0);
  EXPECT_DOUBLE_EQ(a.objective, 3.0);
}

TEST(Allocate, UnconstrainedTakesCheapestCost) {
  AllocationProblem p;
  p.layers.push_back({16, {1, 2, 4}, {1.0, 0.5, 0.6}});
  p.layers.push_back({16, {1, 2, 4}, {1.0, 0.9, 0.1}});
  const Allocation a = allocate_groups(p);
  EXPECT_EQ(a.groups, (std::vector<std::size_t>{2, 4}));
}

TEST(Allocate, TiesPreferSmallerBop) {
  AllocationProblem p;
  p.layers.push_back({16, {1, 2, 4}, {0.5, 0.5, 0.5}});
  EXPECT_EQ(allocate_groups(p).groups, (std::vector<std::size_t>{1}));
}

TEST(Allocate, MatchesExhaustiveSearch) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    std::int64_t budget = 0;
    const AllocationProblem p = random_problem(rng, &budget);
    const Allocation a = allocate_groups(p);
    const oracle::BruteResult b = oracle::brute_allocate(to_brute(p), p.bits, budget);
    ASSERT_TRUE(b.feasible);
    EXPECT_EQ(a.objective, b.objective);
    EXPECT_LE(a.total_bop, budget);
    std::int64_t recomputed = 0;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      recomputed += bop_cost(p.layers[l].channels, p.bits, a.groups[l]);
    }
    EXPECT_EQ(recomputed, a.total_bop);
  }
}

TEST(Allocate, BudgetMonotone) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    std::int64_t budget = 0;
    AllocationProblem p = random_problem(rng, &budget);
    double prev = std::numeric_limits<double>::infinity();
    for (std::int64_t b = 0; b <= budget + 256; b += 32) {
      p.budget = b;
      const double obj = allocate_groups(p).objective;
      EXPECT_LE(obj, prev);
      prev = obj;
    }
  }
}

TEST(Allocate, RejectsMalformedProblems) {
  AllocationProblem p;
  p.layers.push_back({16, {2, 4}, {1.0, 0.5}});
  EXPECT_THROW(allocate_groups(p), ContractError);
  AllocationProblem q;
  q.layers.push_back({16, {1, 2}, {1.0}});
  EXPECT_THROW(allocate_groups(q), ContractError);
  AllocationProblem r;
  r.layers.push_back({16, {1}, {1.0}});
  r.budget = -1;
  EXPECT_THROW(allocate_groups(r), ContractError);
}
