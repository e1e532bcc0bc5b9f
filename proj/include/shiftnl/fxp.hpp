// Copyright 2026 The shiftnl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace shiftnl {

// Signed fixed-point arithmetic.
//
// A value is stored as a raw two's-complement integer of `total_bits` width
// and interpreted as raw / 2^frac_bits. Every operation saturates instead of
// wrapping; a saturated result carries a sticky overflow bit that propagates
// through all later arithmetic, so the caller can check a whole computation
// by looking at its final value.
//
// Right shifts are arithmetic (floor), matching a hardware shifter.
// Multiplication keeps a double-width product and truncates (floor) when
// dropping the extra fractional bits.

struct FxFormat {
  int total_bits = 32;
  int frac_bits = 16;

  /// Checked constructor; throws ContractError unless
  /// 0 < frac_bits < total_bits <= 63.
  static FxFormat make(int total_bits, int frac_bits);

  std::int64_t raw_max() const { return (std::int64_t{1} << (total_bits - 1)) - 1; }
  std::int64_t raw_min() const { return -(std::int64_t{1} << (total_bits - 1)); }
  std::int64_t one() const { return std::int64_t{1} << frac_bits; }
  double ulp() const;
  double max_real() const;

  bool operator==(const FxFormat&) const = default;
};

inline constexpr FxFormat kQ16_16{32, 16};

class FxValue {
 public:
  FxValue() = default;

  /// Wraps a raw integer; out-of-range raws saturate and set the overflow bit.
  static FxValue from_raw(std::int64_t raw, FxFormat format = kQ16_16,
                          bool overflow = false);

  std::int64_t raw() const { return raw_; }
  FxFormat format() const { return format_; }
  bool overflow() const { return overflow_; }
  double to_real() const;

  bool operator==(const FxValue& other) const {
    return raw_ == other.raw_ && format_ == other.format_;
  }

 private:
  std::int64_t raw_ = 0;
  FxFormat format_ = kQ16_16;
  bool overflow_ = false;
};

/// Round half away from zero onto the grid. NaN is a contract violation;
/// values beyond the range (including infinities) saturate.
FxValue fx_from_real(double v, FxFormat format = kQ16_16);
FxValue fx_from_int(std::int64_t v, FxFormat format = kQ16_16);

FxValue fx_add(FxValue a, FxValue b);
FxValue fx_sub(FxValue a, FxValue b);
FxValue fx_neg(FxValue a);
FxValue fx_shr(FxValue a, int n);
FxValue fx_shl(FxValue a, int n);
FxValue fx_mul(FxValue a, FxValue b);

/// Smallest integer >= value(a).
std::int64_t fx_ceil_int(FxValue a);
/// Largest integer <= value(a).
std::int64_t fx_floor_int(FxValue a);

/// floor(log2(value(a))): MSB index of the raw word minus frac_bits.
/// Throws DomainError for a <= 0.
int fx_msb_pos(FxValue a);

}  // namespace shiftnl
