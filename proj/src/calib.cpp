// Copyright 2026 The shiftnl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shiftnl/calib.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "shiftnl/errors.hpp"
#include "shiftnl/groupquant.hpp"

namespace shiftnl {

Histogram::Histogram(double lo_, double hi_, std::size_t bins)
    : lo(lo_), hi(hi_), counts(bins, 0) {
  if (bins == 0) throw ContractError("histogram needs at least one bin");
}

std::size_t Histogram::bin_of(double v) const {
  if (!(hi > lo)) return 0;
  const double t = (v - lo) / (hi - lo) * static_cast<double>(counts.size());
  if (!(t > 0.0)) return 0;
  return std::min(static_cast<std::size_t>(t), counts.size() - 1);
}

std::uint64_t Histogram::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

double ChannelStats::max_abs() const { return std::max(std::fabs(min), std::fabs(max)); }

void RunningMoments::push(double x) {
  if (n_ == 0) {
    min_ = max_ = x;
  } else {
    min_ = std::min(min_, x);
    max_ = std::max(max_, x);
  }
  ++n_;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta * (x - mean_);
}

LayerStats collect_stats(std::span<const Matrix> samples, std::size_t bins) {
  if (samples.empty()) throw ContractError("collect_stats: empty batch");
  const std::size_t channels = samples.front().cols;
  for (const Matrix& s : samples) {
    if (s.cols != channels) {
      throw ContractError("collect_stats: sample with " + std::to_string(s.cols) +
                          " channels, expected " + std::to_string(channels));
    }
  }
  std::vector<RunningMoments> moments(channels);
  for (const Matrix& s : samples)
    for (std::size_t r = 0; r < s.rows; ++r)
      for (std::size_t c = 0; c < channels; ++c) moments[c].push(s(r, c));

  LayerStats out;
  bool any = false;
  for (const RunningMoments& m : moments) {
    if (m.count() == 0) continue;
    out.global_min = any ? std::min(out.global_min, m.min()) : m.min();
    out.global_max = any ? std::max(out.global_max, m.max()) : m.max();
    any = true;
  }
  if (!any) throw ContractError("collect_stats: samples contain no rows");

  out.histogram = Histogram(out.global_min, out.global_max, bins);
  out.channels.resize(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    ChannelStats& cs = out.channels[c];
    cs.min = moments[c].min();
    cs.max = moments[c].max();
    cs.mean = moments[c].mean();
    cs.variance = std::max(moments[c].variance(), 0.0);
    cs.sample_count = moments[c].count();
    cs.histogram = Histogram(out.global_min, out.global_max, bins);
  }
  for (const Matrix& s : samples)
    for (std::size_t r = 0; r < s.rows; ++r)
      for (std::size_t c = 0; c < channels; ++c) {
        out.channels[c].histogram.add(s(r, c));
        out.histogram.add(s(r, c));
      }
  return out;
}

double kl_divergence(std::span<const double> p, std::span<const double> q, double eps) {
  if (p.size() != q.size() || p.empty()) throw ContractError("kl_divergence: size mismatch");
  const double sp = std::accumulate(p.begin(), p.end(), 0.0);
  const double sq = std::accumulate(q.begin(), q.end(), 0.0);
  if (!(sp > 0.0) || !(sq > 0.0)) throw ContractError("kl_divergence: empty distribution");
  const double norm = 1.0 + eps * static_cast<double>(p.size());
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = (p[i] / sp + eps) / norm;
    const double qi = (q[i] / sq + eps) / norm;
    kl += pi * std::log(pi / qi);
  }
  return std::max(kl, 0.0);
}

double kl_divergence(const Histogram& p, const Histogram& q, double eps) {
  std::vector<double> pd(p.counts.begin(), p.counts.end());
  std::vector<double> qd(q.counts.begin(), q.counts.end());
  return kl_divergence(pd, qd, eps);
}

namespace {

Matrix stack_rows(std::span<const Matrix> samples) {
  Matrix all(0, samples.front().cols);
  for (const Matrix& s : samples) {
    all.data.insert(all.data.end(), s.data.begin(), s.data.end());
    all.rows += s.rows;
  }
  return all;
}

}  // namespace

double kl_cost(const LayerStats& stats, std::span<const Matrix> samples, std::size_t n_groups,
               int bits, double clamp_percentile) {
  if (samples.empty()) throw ContractError("kl_cost: empty batch");
  const Matrix all = stack_rows(samples);
  const GroupPlan plan = make_group_plan(all, n_groups, bits, clamp_percentile);
  const Matrix recon = dequantize_group_tensor(quantize_group_tensor(all, plan));
  Histogram q(stats.histogram.lo, stats.histogram.hi, stats.histogram.counts.size());
  for (double v : recon.data) q.add(v);
  return kl_divergence(stats.histogram, q);
}

std::int64_t bop_cost(std::size_t channels, int bits, std::size_t groups) {
  if (groups == 0 || !std::has_single_bit(groups)) {
    throw ContractError("bop_cost: group count " + std::to_string(groups) +
                        " is not a power of two");
  }
  const int log2g = std::countr_zero(groups);
  return static_cast<std::int64_t>(channels) * bits * log2g;
}

std::vector<std::size_t> feasible_group_counts(std::span<const std::size_t> candidates,
                                               std::size_t channels) {
  std::vector<std::size_t> out{1};
  for (std::size_t g : candidates) {
    if (g > 1 && std::has_single_bit(g) && g <= channels) out.push_back(g);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Allocation allocate_groups(const AllocationProblem& problem) {
  if (problem.budget && *problem.budget < 0) throw ContractError("allocate_groups: negative budget");
  const std::size_t layers = problem.layers.size();

  // BOP per (layer, candidate) and the common unit.
  std::vector<std::vector<std::int64_t>> bop(layers);
  std::int64_t unit = 0;
  std::int64_t max_total = 0;
  bool has_free_choice = true;
  for (std::size_t l = 0; l < layers; ++l) {
    const LayerCandidates& lc = problem.layers[l];
    if (lc.group_counts.empty() || lc.group_counts.size() != lc.costs.size()) {
      throw ContractError("allocate_groups: layer " + std::to_string(l) +
                          " needs one cost per candidate");
    }
    std::int64_t layer_max = 0;
    bool layer_free = false;
    for (std::size_t i = 0; i < lc.group_counts.size(); ++i) {
      if (!(lc.costs[i] >= 0.0) || !std::isfinite(lc.costs[i])) {
        throw ContractError("allocate_groups: costs must be finite and non-negative");
      }
      const std::int64_t b = bop_cost(lc.channels, problem.bits, lc.group_counts[i]);
      bop[l].push_back(b);
      unit = std::gcd(unit, b);
      layer_max = std::max(layer_max, b);
      layer_free = layer_free || b == 0;
    }
    has_free_choice = has_free_choice && layer_free;
    max_total += layer_max;
  }
  if (!has_free_choice) {
    throw ContractError("allocate_groups: every layer needs the zero-cost candidate g = 1");
  }
  if (unit == 0) unit = 1;
  std::int64_t cap = max_total / unit;
  if (problem.budget) cap = std::min(cap, *problem.budget / unit);
  const auto width = static_cast<std::size_t>(cap) + 1;

  constexpr double kInf = std::numeric_limits<double>::infinity();
  struct State {
    double objective = kInf;
    std::vector<std::size_t> groups;
  };
  std::vector<State> cur(width), next(width);
  cur[0].objective = 0.0;

  const auto better = [](double obj, const std::vector<std::size_t>& g, const State& s) {
    if (obj != s.objective) return obj < s.objective;
    return g < s.groups;
  };

  for (std::size_t l = 0; l < layers; ++l) {
    const LayerCandidates& lc = problem.layers[l];
    std::fill(next.begin(), next.end(), State{});
    for (std::size_t u = 0; u < width; ++u) {
      if (cur[u].objective == kInf) continue;
      for (std::size_t i = 0; i < lc.group_counts.size(); ++i) {
        const auto step = static_cast<std::size_t>(bop[l][i] / unit);
        if (u + step >= width) continue;
        const double obj = cur[u].objective + lc.costs[i];
        std::vector<std::size_t> groups = cur[u].groups;
        groups.push_back(lc.group_counts[i]);
        State& dst = next[u + step];
        if (better(obj, groups, dst)) {
          dst.objective = obj;
          dst.groups = std::move(groups);
        }
      }
    }
    std::swap(cur, next);
  }

  std::size_t best = width;
  for (std::size_t u = 0; u < width; ++u) {
    if (cur[u].objective == kInf) continue;
    // Strict improvement only: equal objectives keep the smaller budget.
    if (best == width || cur[u].objective < cur[best].objective) best = u;
  }
  Allocation a;
  a.groups = cur[best].groups;
  a.objective = cur[best].objective;
  a.total_bop = static_cast<std::int64_t>(best) * unit;
  return a;
}

}  // namespace shiftnl
