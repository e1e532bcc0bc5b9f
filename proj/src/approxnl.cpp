// Copyright 2026 The shiftnl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shiftnl/approxnl.hpp"

#include <algorithm>
#include <bit>
#include <string>

#include "shiftnl/errors.hpp"

namespace shiftnl {
namespace {

// Counting arithmetic unit. Kernels touch fixed-point values only through
// this class, so the census is complete. There is deliberately no divide.
class Alu {
 public:
  explicit Alu(OpCounter& counter) : c_(counter) {}

  FxValue add(FxValue a, FxValue b) { ++c_.adds; return fx_add(a, b); }
  FxValue sub(FxValue a, FxValue b) { ++c_.adds; return fx_sub(a, b); }
  FxValue neg(FxValue a) { ++c_.adds; return fx_neg(a); }
  FxValue shr(FxValue a, int n) { ++c_.shifts; return fx_shr(a, n); }
  FxValue shl(FxValue a, int n) { ++c_.shifts; return fx_shl(a, n); }
  FxValue mul(FxValue a, FxValue b) { ++c_.mults; return fx_mul(a, b); }

  bool less(FxValue a, FxValue b) { ++c_.compares; return a.raw() < b.raw(); }
  bool less_equal(FxValue a, FxValue b) { ++c_.compares; return a.raw() <= b.raw(); }
  bool is_zero(FxValue a) { ++c_.compares; return a.raw() == 0; }
  bool is_negative(FxValue a) { ++c_.compares; return a.raw() < 0; }
  bool at_least(std::int64_t a, std::int64_t b) { ++c_.compares; return a >= b; }

  FxValue max(FxValue a, FxValue b) { return less(a, b) ? b : a; }
  FxValue min(FxValue a, FxValue b) { return less(b, a) ? b : a; }

  // Ceiling to an integer: add (one - 1), then floor-shift.
  std::int64_t ceil_int(FxValue a) {
    ++c_.adds;
    ++c_.shifts;
    return fx_ceil_int(a);
  }

  // Leading-one detector, counted as a compare tree.
  int msb_pos(FxValue a) { ++c_.compares; return fx_msb_pos(a); }

  // Integer placed on the fixed-point grid (a left shift by frac_bits).
  FxValue from_int(std::int64_t v, FxFormat f) { ++c_.shifts; return fx_from_int(v, f); }

  // (c2 * q + c1) * q + c0
  FxValue horner(FxValue c2, FxValue c1, FxValue c0, FxValue q) {
    return add(mul(add(mul(c2, q), c1), q), c0);
  }

  OpCounter& counter() { return c_; }

 private:
  OpCounter& c_;
};

struct ExpSplit {
  std::int64_t q_int;  // ceil of the base-2 exponent
  FxValue poly;        // 2^q_frac, q_frac in (-1, 0]
};

// Shared front half of appro_exp: x * log2(e) ~ x + (x >> 1) - (x >> 4),
// split into ceil integer part and a non-positive fraction.
ExpSplit exp_split(FxValue x, const ExpLnConstants& k, Alu& alu) {
  const FxValue x_shift = alu.sub(alu.add(x, alu.shr(x, 1)), alu.shr(x, 4));
  const std::int64_t q_int = alu.ceil_int(x_shift);
  const FxValue q_frac = alu.sub(x_shift, alu.from_int(q_int, x.format()));
  return {q_int, alu.horner(k.exp_c2, k.exp_c1, k.exp_c0, q_frac)};
}

FxValue exp_nonpositive(FxValue x, const ExpLnConstants& k, Alu& alu) {
  const ExpSplit s = exp_split(x, k, alu);
  const int frac_bits = x.format().frac_bits;
  if (alu.at_least(-s.q_int, frac_bits)) return FxValue::from_raw(0, x.format(), x.overflow());
  return alu.shr(s.poly, static_cast<int>(-s.q_int));
}

FxValue exp_any(FxValue x, const ExpLnConstants& k, Alu& alu) {
  const ExpSplit s = exp_split(x, k, alu);
  const FxFormat f = x.format();
  if (alu.at_least(0, s.q_int)) {
    if (alu.at_least(-s.q_int, f.frac_bits)) return FxValue::from_raw(0, f, x.overflow());
    return alu.shr(s.poly, static_cast<int>(-s.q_int));
  }
  return alu.shl(s.poly, static_cast<int>(std::min<std::int64_t>(s.q_int, 63)));
}

FxValue ln_positive(FxValue x, const ExpLnConstants& k, Alu& alu) {
  if (x.raw() <= 0) throw DomainError("appro_ln: argument must be positive");
  const int q_m = alu.msb_pos(x);
  // Normalised mantissa in [1, 2).
  const FxValue q_n = q_m >= 0 ? alu.shr(x, q_m) : alu.shl(x, -q_m);
  const FxValue log2 =
      alu.add(alu.from_int(q_m, x.format()), alu.horner(k.log_c2, k.log_c1, k.log_c0, q_n));
  // ln2 ~ (0.1011)b = 1 - 1/4 - 1/16
  return alu.sub(alu.sub(log2, alu.shr(log2, 2)), alu.shr(log2, 4));
}

FxValue divide_via_logs(FxValue a, FxValue b, const ExpLnConstants& k, Alu& alu) {
  return exp_any(alu.sub(ln_positive(a, k, alu), ln_positive(b, k, alu)), k, alu);
}

std::vector<FxValue> softmax_impl(std::span<const FxValue> x, Alu& alu) {
  if (x.empty()) throw ContractError("softmax_int: empty input");
  const FxFormat f = x.front().format();
  const ExpLnConstants k = ExpLnConstants::for_format(f);

  FxValue x_max = x.front();
  for (std::size_t i = 1; i < x.size(); ++i) x_max = alu.max(x_max, x[i]);

  std::vector<FxValue> shifted(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) shifted[i] = alu.sub(x[i], x_max);

  FxValue sum = exp_nonpositive(shifted.front(), k, alu);
  for (std::size_t i = 1; i < shifted.size(); ++i) {
    sum = alu.add(sum, exp_nonpositive(shifted[i], k, alu));
  }
  // The max element alone contributes 0.998, so the sum is always positive.
  const FxValue log_sum = ln_positive(sum, k, alu);

  const FxValue zero = FxValue::from_raw(0, f);
  std::vector<FxValue> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    // A sum below one makes log_sum negative; clamp so the exponent stays in
    // the exp domain.
    out[i] = exp_nonpositive(alu.min(alu.sub(shifted[i], log_sum), zero), k, alu);
  }
  return out;
}

FxValue sigmoid_impl(FxValue z, Alu& alu) {
  const FxValue pair[2] = {FxValue::from_raw(0, z.format()), alu.neg(z)};
  return softmax_impl(pair, alu).front();
}

IsqrtResult isqrt_impl(FxValue var, const ExpLnConstants& k, Alu& alu) {
  if (var.raw() < 0) throw DomainError("newton_isqrt: negative variance");
  const FxFormat f = var.format();
  IsqrtResult result;
  if (alu.is_zero(var)) {
    result.root = FxValue::from_raw(0, f);
    result.degenerate = true;
    return result;
  }
  // bit(var) = msb + 1; floor division toward -inf for sub-unit variances.
  const int bits = alu.msb_pos(var) + 1;
  const int e = bits >= 0 ? bits / 2 : -((-bits + 1) / 2);
  const FxValue one = FxValue::from_raw(f.one(), f);
  FxValue x = e >= 0 ? alu.shl(one, e) : alu.shr(one, -e);
  const FxValue tol = FxValue::from_raw(1, f);

  for (int it = 1; it <= kMaxNewtonIterations; ++it) {
    ++alu.counter().iterations;
    result.iterations = it;
    const FxValue next = alu.shr(alu.add(x, divide_via_logs(var, x, k, alu)), 1);
    FxValue step = alu.sub(next, x);
    if (alu.is_negative(step)) step = alu.neg(step);
    x = next;
    if (alu.less_equal(step, tol)) {
      result.converged = true;
      break;
    }
  }
  result.root = x;
  return result;
}

}  // namespace

OpCounter& OpCounter::operator+=(const OpCounter& other) {
  adds += other.adds;
  shifts += other.shifts;
  mults += other.mults;
  compares += other.compares;
  divides += other.divides;
  iterations += other.iterations;
  return *this;
}

ExpLnConstants ExpLnConstants::for_format(FxFormat format) {
  return {fx_from_real(0.1713, format),  fx_from_real(0.6674, format),
          fx_from_real(0.998, format),   fx_from_real(-0.3369, format),
          fx_from_real(1.995, format),   fx_from_real(-1.65, format)};
}

GeluConfig GeluConfig::for_format(FxFormat format) {
  return {fx_from_real(2.4, format)};
}

FxValue appro_exp(FxValue x, OpCounter& counter) {
  if (x.raw() > 0) throw ContractError("appro_exp: input must be <= 0");
  Alu alu(counter);
  return exp_nonpositive(x, ExpLnConstants::for_format(x.format()), alu);
}

FxValue appro_exp_extended(FxValue x, OpCounter& counter) {
  Alu alu(counter);
  return exp_any(x, ExpLnConstants::for_format(x.format()), alu);
}

FxValue appro_ln(FxValue x, OpCounter& counter) {
  Alu alu(counter);
  return ln_positive(x, ExpLnConstants::for_format(x.format()), alu);
}

FxValue log_div(FxValue a, FxValue b, OpCounter& counter) {
  Alu alu(counter);
  return divide_via_logs(a, b, ExpLnConstants::for_format(a.format()), alu);
}

std::vector<FxValue> softmax_int(std::span<const FxValue> x, OpCounter& counter) {
  Alu alu(counter);
  return softmax_impl(x, alu);
}

FxValue sigmoid_int(FxValue z, OpCounter& counter) {
  Alu alu(counter);
  return sigmoid_impl(z, alu);
}

FxValue gelu_int(FxValue x, OpCounter& counter) {
  Alu alu(counter);
  const FxFormat f = x.format();
  const FxValue boundary = GeluConfig::for_format(f).relu_boundary;
  if (alu.less_equal(boundary, x)) return x;
  if (alu.less_equal(x, fx_neg(boundary))) return FxValue::from_raw(0, f, x.overflow());
  // 1.703125 x = x + x/2 + x/8 + x/16 + x/64
  FxValue z = alu.add(x, alu.shr(x, 1));
  z = alu.add(z, alu.shr(x, 3));
  z = alu.add(z, alu.shr(x, 4));
  z = alu.add(z, alu.shr(x, 6));
  return alu.mul(x, sigmoid_impl(z, alu));
}

IsqrtResult newton_isqrt(FxValue var, OpCounter& counter) {
  Alu alu(counter);
  return isqrt_impl(var, ExpLnConstants::for_format(var.format()), alu);
}

std::uint64_t reciprocal_q32(std::size_t n) {
  if (n == 0) throw ContractError("reciprocal_q32: zero dimension");
  return ((std::uint64_t{1} << 32) + n / 2) / n;
}

std::vector<FxValue> layernorm_int(std::span<const FxValue> x, OpCounter& counter,
                                   LayerNormState* state) {
  if (x.size() < 2) throw ContractError("layernorm_int: needs at least two elements");
  const FxFormat f = x.front().format();
  for (const FxValue& v : x) {
    if (v.format() != f) throw ContractError("layernorm_int: mixed formats");
  }
  Alu alu(counter);
  const ExpLnConstants k = ExpLnConstants::for_format(f);

  LayerNormState st;
  st.n = x.size();
  bool sticky = false;
  // Single pass: sum and sum of squares in wide accumulators.
  for (const FxValue& v : x) {
    st.sum += v.raw();
    st.sum_sq += static_cast<__int128>(v.raw()) * v.raw();
    sticky = sticky || v.overflow();
  }
  counter.adds += 2 * x.size();
  counter.mults += x.size();

  const auto recip = static_cast<__int128>(reciprocal_q32(st.n));
  const auto clamp_raw = [&](__int128 r) {
    if (r > f.raw_max()) return FxValue::from_raw(f.raw_max(), f, true);
    if (r < f.raw_min()) return FxValue::from_raw(f.raw_min(), f, true);
    return FxValue::from_raw(static_cast<std::int64_t>(r), f, sticky);
  };
  st.mean = clamp_raw((st.sum * recip) >> 32);
  const FxValue mean_sq_in = clamp_raw((st.sum_sq * recip) >> (32 + f.frac_bits));
  counter.mults += 2;
  counter.shifts += 2;
  st.var = alu.sub(mean_sq_in, alu.mul(st.mean, st.mean));
  if (alu.is_negative(st.var)) st.var = FxValue::from_raw(0, f, st.var.overflow());

  st.isqrt = isqrt_impl(st.var, k, alu);
  st.inv_std_src = st.isqrt.root;

  std::vector<FxValue> out(x.size(), FxValue::from_raw(0, f));
  if (!st.isqrt.degenerate && st.isqrt.root.raw() > 0) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      FxValue d = alu.sub(x[i], st.mean);
      if (alu.is_zero(d)) continue;
      const bool negative = alu.is_negative(d);
      if (negative) d = alu.neg(d);
      const FxValue q = divide_via_logs(d, st.isqrt.root, k, alu);
      out[i] = negative ? alu.neg(q) : q;
    }
  }
  if (state != nullptr) *state = st;
  return out;
}

std::string_view kernel_name(Kernel kernel) {
  switch (kernel) {
    case Kernel::kExp: return "exp";
    case Kernel::kLn: return "ln";
    case Kernel::kSoftmax: return "softmax";
    case Kernel::kSigmoid: return "sigmoid";
    case Kernel::kGelu: return "gelu";
    case Kernel::kIsqrt: return "isqrt";
    case Kernel::kLayerNorm: return "layernorm";
  }
  return "unknown";
}

Kernel parse_kernel(std::string_view name) {
  for (Kernel k : {Kernel::kExp, Kernel::kLn, Kernel::kSoftmax, Kernel::kSigmoid, Kernel::kGelu,
                   Kernel::kIsqrt, Kernel::kLayerNorm}) {
    if (kernel_name(k) == name) return k;
  }
  throw ContractError("unknown kernel '" + std::string(name) +
                      "' (expected exp, ln, softmax, sigmoid, gelu, isqrt, layernorm)");
}

std::vector<FxValue> census_input(Kernel kernel, std::size_t size, FxFormat format) {
  if (size == 0) throw ContractError("op_census: size must be positive");
  std::vector<FxValue> in(size);
  const double n = static_cast<double>(size);
  for (std::size_t i = 0; i < size; ++i) {
    const double t = static_cast<double>(i);
    double v = 0.0;
    switch (kernel) {
      case Kernel::kExp: v = -8.0 * t / n; break;
      case Kernel::kLn: v = 1.0 + 255.0 * t / n; break;
      case Kernel::kSoftmax: v = -static_cast<double>(i % 8); break;
      case Kernel::kSigmoid: v = -6.0 + 12.0 * t / n; break;
      case Kernel::kGelu: v = 3.0 - 6.0 * t / n; break;
      case Kernel::kIsqrt: v = 1.0 + t; break;
      case Kernel::kLayerNorm: v = static_cast<double>((i * 37) % 256) - 128.0; break;
    }
    in[i] = fx_from_real(v, format);
  }
  return in;
}

OpCounter op_census(Kernel kernel, std::size_t size, FxFormat format) {
  const std::vector<FxValue> in = census_input(kernel, size, format);
  OpCounter c;
  switch (kernel) {
    case Kernel::kExp:
      for (const FxValue& v : in) appro_exp(v, c);
      break;
    case Kernel::kLn:
      for (const FxValue& v : in) appro_ln(v, c);
      break;
    case Kernel::kSoftmax:
      softmax_int(in, c);
      break;
    case Kernel::kSigmoid:
      for (const FxValue& v : in) sigmoid_int(v, c);
      break;
    case Kernel::kGelu:
      for (const FxValue& v : in) gelu_int(v, c);
      break;
    case Kernel::kIsqrt:
      for (const FxValue& v : in) newton_isqrt(v, c);
      break;
    case Kernel::kLayerNorm:
      layernorm_int(in, c);
      break;
  }
  return c;
}

}  // namespace shiftnl
