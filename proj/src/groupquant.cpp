// Copyright 2026 The shiftnl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shiftnl/groupquant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "shiftnl/errors.hpp"

namespace shiftnl {

double GroupPlan::group_scale(std::size_t group) const {
  return std::ldexp(base_scale, k.at(group));
}

std::vector<std::size_t> GroupPlan::channel_groups() const {
  std::vector<std::size_t> out(channels());
  for (std::size_t g = 0; g < num_groups(); ++g)
    for (std::size_t j = group_bounds[g]; j < group_bounds[g + 1]; ++j) out[permutation[j]] = g;
  return out;
}

void GroupPlan::validate() const {
  check_permutation(permutation);
  if (group_bounds.size() < 2 || group_bounds.front() != 0 || group_bounds.back() != channels()) {
    throw ContractError("group plan: bounds must start at 0 and end at the channel count");
  }
  for (std::size_t i = 1; i < group_bounds.size(); ++i) {
    if (group_bounds[i] <= group_bounds[i - 1]) throw ContractError("group plan: empty group");
  }
  if (k.size() != num_groups() || thresholds.size() != num_groups()) {
    throw ContractError("group plan: k/thresholds must have one entry per group");
  }
  if (std::any_of(k.begin(), k.end(), [](int v) { return v < 0 || v > 62; })) {
    throw ContractError("group plan: shift exponents must lie in [0, 62]");
  }
  if (!(base_scale > 0.0) || !std::isfinite(base_scale)) {
    throw ContractError("group plan: base scale must be positive");
  }
  if (q_max != q_max_for_bits(bits)) throw ContractError("group plan: q_max does not match bits");
}

std::int64_t q_max_for_bits(int bits) {
  if (bits < 2 || bits > 32) throw ContractError("unsupported bit width " + std::to_string(bits));
  return (std::int64_t{1} << (bits - 1)) - 1;
}

void check_permutation(std::span<const std::size_t> permutation) {
  std::vector<bool> seen(permutation.size(), false);
  for (std::size_t p : permutation) {
    if (p >= permutation.size() || seen[p]) throw ContractError("not a permutation");
    seen[p] = true;
  }
}

GroupPlan build_permutation(std::span<const double> channel_max_abs, std::size_t n_groups) {
  const std::size_t c = channel_max_abs.size();
  if (n_groups < 1) throw ContractError("build_permutation: need at least one group");
  if (n_groups > c) {
    throw ContractError("build_permutation: " + std::to_string(n_groups) + " groups for " +
                        std::to_string(c) + " channels");
  }
  std::vector<std::size_t> order(c);
  std::iota(order.begin(), order.end(), 0);
  if (n_groups > 1) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return channel_max_abs[a] < channel_max_abs[b];
    });
  }
  const std::size_t size = c / n_groups;
  std::vector<std::size_t> bounds(n_groups + 1);
  for (std::size_t g = 0; g < n_groups; ++g) bounds[g] = g * size;
  bounds[n_groups] = c;
  return plan_from_bounds(std::move(order), std::move(bounds));
}

GroupPlan plan_from_bounds(std::vector<std::size_t> permutation,
                           std::vector<std::size_t> group_bounds) {
  GroupPlan plan;
  plan.permutation = std::move(permutation);
  plan.group_bounds = std::move(group_bounds);
  plan.k.assign(plan.num_groups(), 0);
  plan.thresholds.assign(plan.num_groups(), 0.0);
  return plan;
}

GroupScales compute_group_scales(std::span<const double> magnitudes, int bits) {
  if (magnitudes.empty()) throw ContractError("compute_group_scales: no groups");
  const auto q_max = static_cast<double>(q_max_for_bits(bits));
  std::vector<double> raw(magnitudes.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!std::isfinite(magnitudes[i])) throw ContractError("compute_group_scales: non-finite magnitude");
    raw[i] = std::max(magnitudes[i], kMagnitudeFloor) / q_max;
  }
  GroupScales s;
  s.reference_group =
      static_cast<std::size_t>(std::min_element(raw.begin(), raw.end()) - raw.begin());
  s.base_scale = raw[s.reference_group];
  s.k.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    s.k[i] = static_cast<int>(std::floor(std::log2(raw[i] / s.base_scale) + 0.5));
  }
  return s;
}

void apply_group_scales(GroupPlan& plan, const GroupScales& scales, int bits) {
  if (scales.k.size() != plan.num_groups()) {
    throw ContractError("apply_group_scales: group count mismatch");
  }
  plan.bits = bits;
  plan.q_max = q_max_for_bits(bits);
  plan.base_scale = scales.base_scale;
  plan.k = scales.k;
  plan.thresholds.resize(plan.num_groups());
  for (std::size_t g = 0; g < plan.num_groups(); ++g) {
    plan.thresholds[g] = plan.group_scale(g) * static_cast<double>(plan.q_max);
  }
}

double percentile_abs(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  if (!(p > 0.0 && p <= 100.0)) throw ContractError("percentile must lie in (0, 100]");
  for (double& v : values) v = std::fabs(v);
  std::sort(values.begin(), values.end());
  const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

std::vector<double> channel_max_abs(const Matrix& x) {
  std::vector<double> out(x.cols, 0.0);
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t c = 0; c < x.cols; ++c) out[c] = std::max(out[c], std::fabs(x(r, c)));
  return out;
}

std::vector<double> group_clip_magnitudes(const GroupPlan& plan, const Matrix& calibration,
                                          double percentile) {
  if (calibration.cols != plan.channels()) {
    throw ContractError("group_clip_magnitudes: calibration has " +
                        std::to_string(calibration.cols) + " channels, plan has " +
                        std::to_string(plan.channels()));
  }
  std::vector<double> out(plan.num_groups());
  for (std::size_t g = 0; g < plan.num_groups(); ++g) {
    std::vector<double> values;
    values.reserve(calibration.rows * (plan.group_bounds[g + 1] - plan.group_bounds[g]));
    for (std::size_t j = plan.group_bounds[g]; j < plan.group_bounds[g + 1]; ++j)
      for (std::size_t r = 0; r < calibration.rows; ++r)
        values.push_back(calibration(r, plan.permutation[j]));
    out[g] = percentile_abs(std::move(values), percentile);
  }
  return out;
}

GroupPlan make_group_plan(const Matrix& calibration, std::size_t n_groups, int bits,
                          double percentile) {
  GroupPlan plan = build_permutation(channel_max_abs(calibration), n_groups);
  const std::vector<double> mags = group_clip_magnitudes(plan, calibration, percentile);
  apply_group_scales(plan, compute_group_scales(mags, bits), bits);
  return plan;
}

std::int32_t quantize_value(double z, double step, double threshold, std::int64_t q_max) {
  if (std::fabs(z) > threshold) return static_cast<std::int32_t>(z < 0 ? -q_max : q_max);
  return static_cast<std::int32_t>(std::floor(z / step + 0.5));
}

QuantizedGroupTensor quantize_group_tensor(const Matrix& x, const GroupPlan& plan) {
  plan.validate();
  if (x.cols != plan.channels()) {
    throw ContractError("quantize_group_tensor: tensor has " + std::to_string(x.cols) +
                        " channels, plan has " + std::to_string(plan.channels()));
  }
  QuantizedGroupTensor q;
  q.rows = x.rows;
  q.plan = plan;
  q.codes.resize(x.rows * x.cols);
  for (std::size_t g = 0; g < plan.num_groups(); ++g) {
    const double step = plan.group_scale(g);
    for (std::size_t j = plan.group_bounds[g]; j < plan.group_bounds[g + 1]; ++j) {
      const std::size_t src = plan.permutation[j];
      for (std::size_t r = 0; r < x.rows; ++r) {
        const double z = x(r, src);
        if (!std::isfinite(z)) throw ContractError("quantize_group_tensor: non-finite input");
        q.codes[r * x.cols + j] = quantize_value(z, step, plan.thresholds[g], plan.q_max);
      }
    }
  }
  return q;
}

Matrix dequantize_group_tensor(const QuantizedGroupTensor& q) {
  const GroupPlan& plan = q.plan;
  Matrix out(q.rows, plan.channels());
  for (std::size_t g = 0; g < plan.num_groups(); ++g) {
    const double step = plan.group_scale(g);
    for (std::size_t j = plan.group_bounds[g]; j < plan.group_bounds[g + 1]; ++j)
      for (std::size_t r = 0; r < q.rows; ++r) out(r, plan.permutation[j]) = q.code(r, j) * step;
  }
  return out;
}

std::vector<std::int32_t> quantize_per_tensor(const Matrix& x, double threshold, int bits) {
  const std::int64_t q_max = q_max_for_bits(bits);
  const double step = threshold / static_cast<double>(q_max);
  std::vector<std::int32_t> out(x.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = quantize_value(x.data[i], step, threshold, q_max);
  return out;
}

AlignedSum align_accumulate(std::span<const GroupCode> codes, const GroupPlan& plan) {
  AlignedSum sum{0, plan.base_scale};
  for (const GroupCode& gc : codes) {
    if (gc.group >= plan.num_groups()) throw ContractError("align_accumulate: bad group index");
    const int shift = plan.k[gc.group];
    if (shift < 0) throw ContractError("align_accumulate: negative shift exponent");
    const std::int64_t limit = std::numeric_limits<std::int64_t>::max() >> shift;
    if (gc.code > limit || gc.code < -limit) {
      throw ContractError("align_accumulate: shifted code overflows the accumulator");
    }
    const std::int64_t aligned = gc.code * (std::int64_t{1} << shift);
    if (__builtin_add_overflow(sum.value, aligned, &sum.value)) {
      throw ContractError("align_accumulate: accumulator overflow");
    }
  }
  return sum;
}

FusedLinear fuse_permutation(const Matrix& weight, std::span<const double> bias,
                             std::span<const std::size_t> permutation) {
  if (weight.cols != permutation.size() || bias.size() != permutation.size()) {
    throw ContractError("fuse_permutation: weight/bias width does not match the permutation");
  }
  check_permutation(permutation);
  FusedLinear out{permute_columns(weight, permutation), std::vector<double>(bias.size())};
  for (std::size_t j = 0; j < permutation.size(); ++j) out.bias[j] = bias[permutation[j]];
  return out;
}

Matrix absorb_inverse_permutation(const Matrix& next_weight,
                                  std::span<const std::size_t> permutation) {
  if (next_weight.rows != permutation.size()) {
    throw ContractError("absorb_inverse_permutation: weight rows do not match the permutation");
  }
  check_permutation(permutation);
  Matrix out(next_weight.rows, next_weight.cols);
  for (std::size_t j = 0; j < permutation.size(); ++j) {
    const auto src = next_weight.row(permutation[j]);
    std::copy(src.begin(), src.end(), out.row(j).begin());
  }
  return out;
}

Matrix permutation_matrix(std::span<const std::size_t> permutation) {
  check_permutation(permutation);
  Matrix r(permutation.size(), permutation.size());
  for (std::size_t j = 0; j < permutation.size(); ++j) r(permutation[j], j) = 1.0;
  return r;
}

Matrix permute_columns(const Matrix& x, std::span<const std::size_t> permutation) {
  if (x.cols != permutation.size()) throw ContractError("permute_columns: width mismatch");
  Matrix out(x.rows, x.cols);
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t j = 0; j < x.cols; ++j) out(r, j) = x(r, permutation[j]);
  return out;
}

}  // namespace shiftnl
