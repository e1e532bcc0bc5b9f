// Copyright 2026 The shiftnl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "shiftnl/approxnl.hpp"
#include "shiftnl/fxp.hpp"
#include "shiftnl/groupquant.hpp"
#include "shiftnl/tensor.hpp"

namespace shiftnl {

// ---------------------------------------------------------------------------
// Double-precision oracles.

std::vector<double> exact_softmax(std::span<const double> x);
double exact_sigmoid(double z);
double exact_gelu_erf(double x);
/// x * sigmoid(1.702 x): the float form the integer GELU approximates.
double exact_gelu_sigmoid(double x);
/// Zero mean, unit population variance; all zeros for a constant input.
std::vector<double> exact_layernorm(std::span<const double> x);

// ---------------------------------------------------------------------------
// Error sweeps.

/// Either an arithmetic grid "lo:hi:step" or the integer grid "int8"
/// (-128..127).
struct Domain {
  double lo = 0.0;
  double hi = 0.0;
  double step = 1.0;
  bool int8_grid = false;

  /// Throws ContractError on malformed text, step <= 0 or hi < lo.
  static Domain parse(std::string_view text);
  std::vector<double> points() const;
  std::string to_string() const;
};

struct PointError {
  double x = 0.0;
  double approx = 0.0;
  double exact = 0.0;
  double abs_error = 0.0;
  double rel_error = 0.0;
};

struct ErrorReport {
  std::string kernel;
  std::string domain;
  std::size_t samples = 0;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  double mean_squared_error = 0.0;
  double argmax_abs = 0.0;
  double argmax_rel = 0.0;
  std::vector<PointError> points;  // filled when requested
};

struct SweepOptions {
  FxFormat format = kQ16_16;
  bool extended = false;     // allow x > 0 for exp
  bool keep_points = false;
};

// Probe per grid point x:
//   exp, ln, sigmoid, gelu, isqrt  the scalar kernel at x
//   softmax                        the vector [x, 0], worst of both outputs
//   layernorm                      the vector [0, 1, x], worst element
// Points outside a kernel's precondition throw ContractError/DomainError.
ErrorReport sweep_error(Kernel kernel, const Domain& domain, const SweepOptions& options = {});

// ---------------------------------------------------------------------------
// Synthetic encoder block.

struct BlockDims {
  std::size_t tokens = 16;
  std::size_t heads = 2;
  std::size_t model_dim = 32;
  std::size_t mlp_dim = 64;
};

enum class Preset {
  kStandard,
  // LayerNorm gains and MLP column scales spread log-uniformly over two
  // decades, giving post-nonlinearity channels very different ranges.
  kHeavyTailed,
};

std::string_view preset_name(Preset preset);
Preset parse_preset(std::string_view name);

struct SyntheticBlock {
  BlockDims dims;
  std::uint64_t seed = 0;
  Preset preset = Preset::kStandard;
  Matrix wq, wk, wv, wo, w1, w2;
  std::vector<double> bq, bk, bv, bo, b1, b2;
  std::vector<double> ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;

  /// Identical (dims, seed, preset) give identical weights.
  static SyntheticBlock make(const BlockDims& dims, std::uint64_t seed,
                             Preset preset = Preset::kStandard);
  /// [tokens x model_dim] input drawn from `seed`.
  Matrix sample_input(std::uint64_t seed) const;
};

enum class Mode { kFloat, kInteger };

/// Where activations are group-quantized in integer mode.
struct BlockPlans {
  GroupPlan ln1;
  GroupPlan attention;  // softmax rows, channels = key positions
  GroupPlan gelu;
  GroupPlan ln2;
};

/// Activations at the four quantization sites.
struct SiteActivations {
  Matrix ln1, attention, gelu, ln2;
};

struct ForwardResult {
  Matrix output;
  OpCounter softmax_ops;
  OpCounter gelu_ops;
  OpCounter layernorm_ops;
  bool fixed_point_overflow = false;
};

/// Pre-norm block: x + Attn(LN1 x), then + MLP(LN2 .). Integer mode runs the
/// integer kernels for softmax, GELU and LayerNorm and, when `plans` is given,
/// quantizes each nonlinear output and feeds the next matmul through
/// reordered, shift-aligned codes.
ForwardResult forward_block(const SyntheticBlock& block, const Matrix& input, Mode mode,
                            const BlockPlans* plans = nullptr,
                            SiteActivations* capture = nullptr,
                            FxFormat format = kQ16_16);

struct QuantSettings {
  int bits = 8;
  std::size_t groups = 8;  // capped at each site's channel count
  double clamp_percentile = 99.9;
};

/// Plans from integer-mode activations of `batches` calibration inputs drawn
/// from `seed`.
BlockPlans calibrate_block(const SyntheticBlock& block, const QuantSettings& settings,
                           std::size_t batches, std::uint64_t seed);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct SimulationResult {
  ForwardResult reference;  // float pipeline
  ForwardResult integer;    // integer kernels + group quantization
  double cosine_similarity = 0.0;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;  // max |int - ref| / max |ref|
  double mean_squared_error = 0.0;
};

inline constexpr std::size_t kCalibrationBatches = 8;

/// Calibrates on inputs derived from `input_seed + 1`, then compares the two
/// pipelines on the input drawn from `input_seed`.
SimulationResult simulate_block(const SyntheticBlock& block, const QuantSettings& settings,
                                std::uint64_t input_seed);

/// Heavy-tailed activations [rows x channels]: Laplace samples with channel
/// scales log-uniform over [0.01, 10].
Matrix heavy_tailed_activations(std::size_t rows, std::size_t channels, std::uint64_t seed);

}  // namespace shiftnl
