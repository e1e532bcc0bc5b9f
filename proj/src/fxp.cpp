// Copyright 2026 The shiftnl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shiftnl/fxp.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "shiftnl/errors.hpp"

namespace shiftnl {
namespace {

using Wide = __int128;

void require_same_format(const FxValue& a, const FxValue& b) {
  if (a.format() != b.format()) {
    throw ContractError("fixed-point format mismatch: Q" +
                        std::to_string(a.format().total_bits - a.format().frac_bits) + "." +
                        std::to_string(a.format().frac_bits) + " vs Q" +
                        std::to_string(b.format().total_bits - b.format().frac_bits) + "." +
                        std::to_string(b.format().frac_bits));
  }
}

void require_shift_count(int n) {
  if (n < 0) throw ContractError("negative shift count " + std::to_string(n));
}

FxValue saturate(Wide raw, FxFormat fmt, bool sticky) {
  if (raw > fmt.raw_max()) return FxValue::from_raw(fmt.raw_max(), fmt, true);
  if (raw < fmt.raw_min()) return FxValue::from_raw(fmt.raw_min(), fmt, true);
  return FxValue::from_raw(static_cast<std::int64_t>(raw), fmt, sticky);
}

}  // namespace

FxFormat FxFormat::make(int total_bits, int frac_bits) {
  if (!(0 < frac_bits && frac_bits < total_bits && total_bits <= 63)) {
    throw ContractError("invalid fixed-point format: total_bits=" + std::to_string(total_bits) +
                        " frac_bits=" + std::to_string(frac_bits));
  }
  return FxFormat{total_bits, frac_bits};
}

double FxFormat::ulp() const { return std::ldexp(1.0, -frac_bits); }

double FxFormat::max_real() const {
  return static_cast<double>(raw_max()) * ulp();
}

FxValue FxValue::from_raw(std::int64_t raw, FxFormat format, bool overflow) {
  FxValue v;
  v.format_ = format;
  if (raw > format.raw_max()) {
    v.raw_ = format.raw_max();
    v.overflow_ = true;
  } else if (raw < format.raw_min()) {
    v.raw_ = format.raw_min();
    v.overflow_ = true;
  } else {
    v.raw_ = raw;
    v.overflow_ = overflow;
  }
  return v;
}

double FxValue::to_real() const {
  return std::ldexp(static_cast<double>(raw_), -format_.frac_bits);
}

FxValue fx_from_real(double v, FxFormat format) {
  if (std::isnan(v)) throw ContractError("fx_from_real: NaN input");
  const double scaled = std::ldexp(std::fabs(v), format.frac_bits);
  const double rounded = std::floor(scaled + 0.5);
  // Anything at or above 2^63 cannot be held even transiently.
  if (rounded >= 9.2e18) {
    return FxValue::from_raw(v < 0 ? format.raw_min() : format.raw_max(), format, true);
  }
  const auto magnitude = static_cast<std::int64_t>(rounded);
  return FxValue::from_raw(v < 0 ? -magnitude : magnitude, format);
}

FxValue fx_from_int(std::int64_t v, FxFormat format) {
  return saturate(static_cast<Wide>(v) * format.one(), format, false);
}

FxValue fx_add(FxValue a, FxValue b) {
  require_same_format(a, b);
  return saturate(static_cast<Wide>(a.raw()) + b.raw(), a.format(),
                  a.overflow() || b.overflow());
}

FxValue fx_sub(FxValue a, FxValue b) {
  require_same_format(a, b);
  return saturate(static_cast<Wide>(a.raw()) - b.raw(), a.format(),
                  a.overflow() || b.overflow());
}

FxValue fx_neg(FxValue a) {
  return saturate(-static_cast<Wide>(a.raw()), a.format(), a.overflow());
}

FxValue fx_shr(FxValue a, int n) {
  require_shift_count(n);
  const std::int64_t raw = n >= 63 ? (a.raw() < 0 ? -1 : 0) : (a.raw() >> n);
  return FxValue::from_raw(raw, a.format(), a.overflow());
}

FxValue fx_shl(FxValue a, int n) {
  require_shift_count(n);
  if (a.raw() == 0) return a;
  if (n >= a.format().total_bits) {
    return saturate(a.raw() < 0 ? Wide{a.format().raw_min()} - 1 : Wide{a.format().raw_max()} + 1,
                    a.format(), true);
  }
  return saturate(static_cast<Wide>(a.raw()) * (Wide{1} << n), a.format(), a.overflow());
}

FxValue fx_mul(FxValue a, FxValue b) {
  require_same_format(a, b);
  const Wide product = static_cast<Wide>(a.raw()) * b.raw();
  return saturate(product >> a.format().frac_bits, a.format(), a.overflow() || b.overflow());
}

std::int64_t fx_floor_int(FxValue a) { return a.raw() >> a.format().frac_bits; }

std::int64_t fx_ceil_int(FxValue a) {
  const std::int64_t frac_mask = a.format().one() - 1;
  const std::int64_t floor = a.raw() >> a.format().frac_bits;
  return (a.raw() & frac_mask) != 0 ? floor + 1 : floor;
}

int fx_msb_pos(FxValue a) {
  if (a.raw() <= 0) throw DomainError("fx_msb_pos: non-positive argument");
  const int msb = 63 - std::countl_zero(static_cast<std::uint64_t>(a.raw()));
  return msb - a.format().frac_bits;
}

}  // namespace shiftnl
