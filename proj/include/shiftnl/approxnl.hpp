// Copyright 2026 The shiftnl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "shiftnl/fxp.hpp"

namespace shiftnl {

// Integer-only Transformer nonlinearities built from shifts, adds and
// second-order polynomials:
//
//   appro_exp  e^x   = 2^(x*log2 e), log2 e ~ (1.0111)b, 2^frac by polynomial
//   appro_ln   ln x  = ln2 * (msb + log2(mantissa)), ln2 ~ (0.1011)b
//   softmax    exp(x - max - ln(sum exp(x - max)))      (no divider)
//   gelu       ReLU outside [-2.4, 2.4], x * sigmoid(1.702x) inside, with the
//              sigmoid taken as a two-element softmax
//   layernorm  one-pass E[x^2] - E[x]^2, Newton square root, and
//              division as exp(ln a - ln b)
//
// Every kernel takes an OpCounter and records the primitive operations it
// issues. The arithmetic unit exposed to kernels has no division primitive,
// so `divides` stays zero by construction; it exists so reports can state it.

/// Census of primitive operations. Counters only grow during a kernel call.
struct OpCounter {
  std::uint64_t adds = 0;
  std::uint64_t shifts = 0;
  std::uint64_t mults = 0;
  std::uint64_t compares = 0;
  std::uint64_t divides = 0;
  std::uint64_t iterations = 0;

  OpCounter& operator+=(const OpCounter& other);
  bool operator==(const OpCounter&) const = default;
};

/// Polynomial coefficients of the exp and log2 approximations, encoded in a
/// given format (each within half an ulp of its decimal value).
struct ExpLnConstants {
  FxValue exp_c2, exp_c1, exp_c0;  // 0.1713, 0.6674, 0.998
  FxValue log_c2, log_c1, log_c0;  // -0.3369, 1.995, -1.65

  static ExpLnConstants for_format(FxFormat format);
};

/// GELU branch boundary. The 1.702 sigmoid gain is applied as the shift-add
/// chain 1 + 1/2 + 1/8 + 1/16 + 1/64 = 1.703125.
struct GeluConfig {
  FxValue relu_boundary;

  static GeluConfig for_format(FxFormat format);
  static constexpr double kGain = 1.703125;
};

/// 2^x for x <= 0 via base conversion, integer/fraction split and a
/// second-order polynomial on the fraction. Throws ContractError for x > 0.
FxValue appro_exp(FxValue x, OpCounter& counter);

/// Same construction for any sign of x; positive integer parts become a
/// saturating left shift.
FxValue appro_exp_extended(FxValue x, OpCounter& counter);

/// Natural log for x >= 1 ulp. Throws DomainError otherwise.
FxValue appro_ln(FxValue x, OpCounter& counter);

/// a / b for a, b > 0 computed as exp(ln a - ln b).
FxValue log_div(FxValue a, FxValue b, OpCounter& counter);

/// Division-free softmax. Throws ContractError on an empty input.
std::vector<FxValue> softmax_int(std::span<const FxValue> x, OpCounter& counter);

/// sigma(z) as the first output of softmax_int([0, -z]).
FxValue sigmoid_int(FxValue z, OpCounter& counter);

FxValue gelu_int(FxValue x, OpCounter& counter);

struct IsqrtResult {
  FxValue root;
  int iterations = 0;
  bool degenerate = false;  // var below one ulp; root is zero
  bool converged = false;   // stopped on the 1-ulp rule, not the cap
};

inline constexpr int kMaxNewtonIterations = 10;

/// Newton square root x <- (x + var/x) >> 1 with log-domain division,
/// seeded at 2^floor(bit(var)/2). Throws DomainError for var < 0.
IsqrtResult newton_isqrt(FxValue var, OpCounter& counter);

/// Fixed-point reciprocal of a static dimension, 2^32 / n rounded. Computed
/// once per model shape, outside the kernel datapath.
std::uint64_t reciprocal_q32(std::size_t n);

struct LayerNormState {
  __int128 sum = 0;     // sum of raw x
  __int128 sum_sq = 0;  // sum of raw x^2 (2 * frac_bits fractional bits)
  std::size_t n = 0;
  FxValue mean;
  FxValue var;
  FxValue inv_std_src;  // Newton square root of var
  IsqrtResult isqrt;
};

/// Division-free LayerNorm without affine parameters. Throws ContractError
/// for fewer than two elements. A degenerate variance yields all zeros.
std::vector<FxValue> layernorm_int(std::span<const FxValue> x, OpCounter& counter,
                                   LayerNormState* state = nullptr);

enum class Kernel { kExp, kLn, kSoftmax, kSigmoid, kGelu, kIsqrt, kLayerNorm };

std::string_view kernel_name(Kernel kernel);
/// Throws ContractError for unknown names.
Kernel parse_kernel(std::string_view name);

/// Runs `kernel` on a fixed canonical input of `size` elements and returns the
/// operation census.
OpCounter op_census(Kernel kernel, std::size_t size, FxFormat format = kQ16_16);

/// The canonical input used by op_census.
std::vector<FxValue> census_input(Kernel kernel, std::size_t size, FxFormat format = kQ16_16);

}  // namespace shiftnl
