// Copyright 2026 The shiftnl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "shiftnl/tensor.hpp"

namespace shiftnl {

inline constexpr std::size_t kHistogramBins = 2048;

/// Fixed-width bins over [lo, hi]; values outside are clamped into the edge
/// bins.
struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::uint64_t> counts;

  Histogram() = default;
  Histogram(double lo, double hi, std::size_t bins);

  std::size_t bin_of(double v) const;
  void add(double v) { ++counts[bin_of(v)]; }
  std::uint64_t total() const;
};

struct ChannelStats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double variance = 0.0;  // population
  Histogram histogram;
  std::uint64_t sample_count = 0;

  double max_abs() const;
};

struct LayerStats {
  std::vector<ChannelStats> channels;
  Histogram histogram;  // all channels pooled, same bins
  double global_min = 0.0;
  double global_max = 0.0;
};

/// Streaming moments, one sample at a time (Welford).
class RunningMoments {
 public:
  void push(double x);
  std::uint64_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ == 0 ? 0.0 : m2_ / static_cast<double>(n_); }
  double min() const { return min_; }
  double max() const { return max_; }

 private:
  std::uint64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
  double min_ = 0.0;
  double max_ = 0.0;
};

/// Per-channel statistics over a batch of [rows x channels] samples.
/// Throws ContractError on an empty batch or inconsistent channel counts.
LayerStats collect_stats(std::span<const Matrix> samples, std::size_t bins = kHistogramBins);

inline constexpr double kKlSmoothing = 1e-9;

/// D_KL(P || Q) of two count vectors, each normalised and smoothed by adding
/// `eps` per bin before renormalising.
double kl_divergence(std::span<const double> p, std::span<const double> q,
                     double eps = kKlSmoothing);
double kl_divergence(const Histogram& p, const Histogram& q, double eps = kKlSmoothing);

/// KL between the layer's float histogram and the histogram of its
/// group-quantized reconstruction with `n_groups` groups.
double kl_cost(const LayerStats& stats, std::span<const Matrix> samples, std::size_t n_groups,
               int bits, double clamp_percentile);

/// B(g) = C * b * log2(g). Throws ContractError unless g is a power of two.
std::int64_t bop_cost(std::size_t channels, int bits, std::size_t groups);

/// Powers of two from `candidates` that do not exceed `channels`; 1 is always
/// included.
std::vector<std::size_t> feasible_group_counts(std::span<const std::size_t> candidates,
                                               std::size_t channels);

struct LayerCandidates {
  std::size_t channels = 0;
  std::vector<std::size_t> group_counts;
  std::vector<double> costs;  // KL cost per group count
};

struct AllocationProblem {
  std::vector<LayerCandidates> layers;
  int bits = 8;
  std::optional<std::int64_t> budget;  // nullopt = unconstrained
};

struct Allocation {
  std::vector<std::size_t> groups;
  double objective = 0.0;
  std::int64_t total_bop = 0;
};

/// Exact multiple-choice knapsack by dynamic programming on a gcd-rescaled
/// budget axis. Minimises the summed cost; ties go to the smaller total BOP,
/// then to the lexicographically smaller group vector.
Allocation allocate_groups(const AllocationProblem& problem);

}  // namespace shiftnl
