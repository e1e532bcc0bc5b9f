// Copyright 2026 The shiftnl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "shiftnl/tensor.hpp"

namespace shiftnl {

// Reorder-based group quantization.
//
// Channels are sorted by magnitude and cut into contiguous groups. Every
// group shares one uniform quantizer whose step is a power-of-two multiple
// of the reference (finest) step, so codes from different groups can be
// summed exactly after a left shift. Values beyond a group's clamp
// threshold saturate to +-q_max.

/// Per-layer grouping. `permutation[j]` is the original channel that sits at
/// reordered position j; groups are the position ranges
/// [group_bounds[i], group_bounds[i + 1]).
struct GroupPlan {
  std::vector<std::size_t> permutation;
  std::vector<std::size_t> group_bounds;
  double base_scale = 1.0;
  std::vector<int> k;               // step of group i is base_scale * 2^k[i]
  std::vector<double> thresholds;   // step_i * q_max
  int bits = 8;
  std::int64_t q_max = 127;

  std::size_t channels() const { return permutation.size(); }
  std::size_t num_groups() const { return group_bounds.empty() ? 0 : group_bounds.size() - 1; }
  double group_scale(std::size_t group) const;
  /// Group index of every original channel.
  std::vector<std::size_t> channel_groups() const;
  /// Throws ContractError when any structural invariant is broken.
  void validate() const;
};

/// 2^(bits - 1) - 1. Throws ContractError outside 2..32 bits.
std::int64_t q_max_for_bits(int bits);

/// Sorts channels by max-abs ascending (stable, ties by index) and cuts
/// `n_groups` equal contiguous groups, the last absorbing the remainder. A
/// single group keeps the identity order. Scales are left unset.
GroupPlan build_permutation(std::span<const double> channel_max_abs, std::size_t n_groups);

/// Skeleton from externally chosen order and boundaries.
GroupPlan plan_from_bounds(std::vector<std::size_t> permutation,
                           std::vector<std::size_t> group_bounds);

struct GroupScales {
  double base_scale = 1.0;
  std::vector<int> k;
  std::size_t reference_group = 0;
};

/// Magnitudes below this are raised to it (one Q16.16 ulp).
inline constexpr double kMagnitudeFloor = 1.0 / 65536.0;

/// Raw step mag / q_max per group; the smallest is the reference and every
/// other group gets k = round(log2(step / reference)), ties upward.
GroupScales compute_group_scales(std::span<const double> magnitudes, int bits);

/// Fills base_scale, k, thresholds, bits and q_max.
void apply_group_scales(GroupPlan& plan, const GroupScales& scales, int bits);

/// Linear-interpolated percentile of |values|; p in (0, 100].
double percentile_abs(std::vector<double> values, double p);

std::vector<double> channel_max_abs(const Matrix& x);

/// Per-group clip magnitude: the `percentile` of |x| over the group's channels.
std::vector<double> group_clip_magnitudes(const GroupPlan& plan, const Matrix& calibration,
                                          double percentile);

/// Complete plan from a calibration matrix [samples x channels].
GroupPlan make_group_plan(const Matrix& calibration, std::size_t n_groups, int bits,
                          double percentile);

/// The element rule: round-half-up within the threshold, sign(z) * q_max
/// beyond it.
std::int32_t quantize_value(double z, double step, double threshold, std::int64_t q_max);

struct QuantizedGroupTensor {
  std::size_t rows = 0;
  std::vector<std::int32_t> codes;  // [rows x channels] in permuted order
  GroupPlan plan;

  std::int32_t code(std::size_t r, std::size_t position) const {
    return codes[r * plan.channels() + position];
  }
};

/// Throws ContractError on channel mismatch or non-finite input.
QuantizedGroupTensor quantize_group_tensor(const Matrix& x, const GroupPlan& plan);

/// Back to reals, in the original channel order.
Matrix dequantize_group_tensor(const QuantizedGroupTensor& q);

/// Single-scale baseline over the whole tensor, original channel order.
std::vector<std::int32_t> quantize_per_tensor(const Matrix& x, double threshold, int bits);

struct GroupCode {
  std::int64_t code = 0;
  std::size_t group = 0;
};

struct AlignedSum {
  std::int64_t value = 0;  // in units of base_scale
  double base_scale = 1.0;
};

/// Sum of code << k[group]. Only shifts and adds; throws ContractError when
/// the 64-bit accumulator would overflow or a group index is out of range.
AlignedSum align_accumulate(std::span<const GroupCode> codes, const GroupPlan& plan);

struct FusedLinear {
  Matrix weight;
  std::vector<double> bias;
};

/// Folds a channel permutation R into a producer layer y = xW + b, giving
/// (W R, b R): output column j becomes original column permutation[j].
FusedLinear fuse_permutation(const Matrix& weight, std::span<const double> bias,
                             std::span<const std::size_t> permutation);

/// Folds R^-1 = R^T into a consumer weight: row j becomes original row
/// permutation[j].
Matrix absorb_inverse_permutation(const Matrix& next_weight,
                                  std::span<const std::size_t> permutation);

/// Explicit 0/1 matrix with R(permutation[j], j) = 1.
Matrix permutation_matrix(std::span<const std::size_t> permutation);

Matrix permute_columns(const Matrix& x, std::span<const std::size_t> permutation);

/// Throws ContractError unless `permutation` is a bijection on [0, n).
void check_permutation(std::span<const std::size_t> permutation);

}  // namespace shiftnl
