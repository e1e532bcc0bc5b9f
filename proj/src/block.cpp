// Copyright 2026 The shiftnl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "shiftnl/errors.hpp"
#include "shiftnl/refmodel.hpp"

namespace shiftnl {
namespace {

using Rng = std::mt19937_64;

Matrix random_matrix(std::size_t rows, std::size_t cols, double sd, Rng& rng) {
  std::normal_distribution<double> dist(0.0, sd);
  Matrix m(rows, cols);
  for (double& v : m.data) v = dist(rng);
  return m;
}

std::vector<double> random_vector(std::size_t n, double mean, double sd, Rng& rng) {
  std::normal_distribution<double> dist(mean, sd);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

std::vector<double> log_uniform(std::size_t n, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(std::log10(lo), std::log10(hi));
  std::vector<double> v(n);
  for (double& x : v) x = std::pow(10.0, dist(rng));
  return v;
}

Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t count) {
  Matrix out(m.rows, count);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = m(r, begin + c);
  return out;
}

void append_rows(Matrix& dst, const Matrix& src) {
  if (dst.rows == 0) dst.cols = src.cols;
  dst.data.insert(dst.data.end(), src.data.begin(), src.data.end());
  dst.rows += src.rows;
}

class Pipeline {
 public:
  Pipeline(Mode mode, FxFormat format) : mode_(mode), format_(format) {}

  Matrix layernorm(const Matrix& x, std::span<const double> gamma, std::span<const double> beta) {
    Matrix out(x.rows, x.cols);
    for (std::size_t r = 0; r < x.rows; ++r) {
      std::vector<double> normed;
      if (mode_ == Mode::kFloat) {
        normed = exact_layernorm(x.row(r));
      } else {
        const std::vector<FxValue> y = layernorm_int(to_fx(x.row(r)), result.layernorm_ops);
        normed = from_fx(y);
      }
      for (std::size_t c = 0; c < x.cols; ++c) out(r, c) = normed[c] * gamma[c] + beta[c];
    }
    return out;
  }

  void softmax_rows(Matrix& s) {
    for (std::size_t r = 0; r < s.rows; ++r) {
      std::vector<double> p;
      if (mode_ == Mode::kFloat) {
        p = exact_softmax(s.row(r));
      } else {
        p = from_fx(softmax_int(to_fx(s.row(r)), result.softmax_ops));
      }
      std::copy(p.begin(), p.end(), s.row(r).begin());
    }
  }

  void gelu(Matrix& a) {
    for (double& v : a.data) {
      if (mode_ == Mode::kFloat) {
        v = exact_gelu_erf(v);
      } else {
        const FxValue y = gelu_int(fx_from_real(v, format_), result.gelu_ops);
        note(y);
        v = y.to_real();
      }
    }
  }

  ForwardResult result;

 private:
  std::vector<FxValue> to_fx(std::span<const double> v) {
    std::vector<FxValue> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = fx_from_real(v[i], format_);
    return out;
  }
  std::vector<double> from_fx(const std::vector<FxValue>& v) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      note(v[i]);
      out[i] = v[i].to_real();
    }
    return out;
  }
  void note(const FxValue& v) { result.fixed_point_overflow = result.fixed_point_overflow || v.overflow(); }

  Mode mode_;
  FxFormat format_;
};

// Consumer of a quantized activation: codes arrive in reordered channel order,
// so the weight gets the inverse permutation folded into its rows, and every
// code is brought to the reference scale by a left shift.
Matrix quantized_matmul(const Matrix& activation, const GroupPlan& plan, const Matrix& weight) {
  const QuantizedGroupTensor q = quantize_group_tensor(activation, plan);
  const Matrix w = absorb_inverse_permutation(weight, plan.permutation);
  std::vector<int> shift(plan.channels());
  for (std::size_t g = 0; g < plan.num_groups(); ++g)
    for (std::size_t j = plan.group_bounds[g]; j < plan.group_bounds[g + 1]; ++j) shift[j] = plan.k[g];

  Matrix out(activation.rows, weight.cols);
  for (std::size_t r = 0; r < activation.rows; ++r) {
    for (std::size_t j = 0; j < plan.channels(); ++j) {
      const auto aligned = static_cast<double>(std::int64_t{q.code(r, j)} << shift[j]);
      if (aligned == 0.0) continue;
      for (std::size_t o = 0; o < weight.cols; ++o) out(r, o) += aligned * w(j, o);
    }
  }
  for (double& v : out.data) v *= plan.base_scale;
  return out;
}

Matrix project(const Matrix& x, const Matrix& w, std::span<const double> bias,
               const GroupPlan* plan) {
  Matrix out = plan != nullptr ? quantized_matmul(x, *plan, w) : matmul(x, w);
  add_row_bias(out, bias);
  return out;
}

}  // namespace

std::string_view preset_name(Preset preset) {
  return preset == Preset::kHeavyTailed ? "heavy_tailed" : "standard";
}

Preset parse_preset(std::string_view name) {
  if (name == "standard") return Preset::kStandard;
  if (name == "heavy_tailed") return Preset::kHeavyTailed;
  throw ContractError("unknown preset '" + std::string(name) + "' (expected standard, heavy_tailed)");
}

SyntheticBlock SyntheticBlock::make(const BlockDims& dims, std::uint64_t seed, Preset preset) {
  if (dims.tokens < 1 || dims.heads < 1 || dims.model_dim < 2 || dims.mlp_dim < 1 ||
      dims.model_dim % dims.heads != 0) {
    throw ContractError("block dims: model_dim must be >= 2 and divisible by heads");
  }
  Rng rng(seed);
  SyntheticBlock b;
  b.dims = dims;
  b.seed = seed;
  b.preset = preset;
  const std::size_t d = dims.model_dim;
  const std::size_t m = dims.mlp_dim;
  const double sd_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double sd_m = 1.0 / std::sqrt(static_cast<double>(m));
  b.wq = random_matrix(d, d, sd_d, rng);
  b.wk = random_matrix(d, d, sd_d, rng);
  b.wv = random_matrix(d, d, sd_d, rng);
  b.wo = random_matrix(d, d, sd_d, rng);
  b.w1 = random_matrix(d, m, sd_d, rng);
  b.w2 = random_matrix(m, d, sd_m, rng);
  b.bq = random_vector(d, 0.0, 0.02, rng);
  b.bk = random_vector(d, 0.0, 0.02, rng);
  b.bv = random_vector(d, 0.0, 0.02, rng);
  b.bo = random_vector(d, 0.0, 0.02, rng);
  b.b1 = random_vector(m, 0.0, 0.02, rng);
  b.b2 = random_vector(d, 0.0, 0.02, rng);
  b.ln1_beta = random_vector(d, 0.0, 0.05, rng);
  b.ln2_beta = random_vector(d, 0.0, 0.05, rng);
  if (preset == Preset::kStandard) {
    b.ln1_gamma = random_vector(d, 1.0, 0.1, rng);
    b.ln2_gamma = random_vector(d, 1.0, 0.1, rng);
  } else {
    b.ln1_gamma = log_uniform(d, 0.05, 5.0, rng);
    b.ln2_gamma = log_uniform(d, 0.05, 5.0, rng);
    const std::vector<double> col_scale = log_uniform(m, 0.1, 10.0, rng);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < m; ++c) b.w1(r, c) *= col_scale[c];
    // Undo the MLP gain on the way out so the residual stream stays O(1).
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < d; ++c) b.w2(r, c) /= col_scale[r];
  }
  return b;
}

Matrix SyntheticBlock::sample_input(std::uint64_t input_seed) const {
  Rng rng(input_seed ^ 0x9e3779b97f4a7c15ULL);
  return random_matrix(dims.tokens, dims.model_dim, 1.0, rng);
}

ForwardResult forward_block(const SyntheticBlock& block, const Matrix& input, Mode mode,
                            const BlockPlans* plans, SiteActivations* capture, FxFormat format) {
  const BlockDims& d = block.dims;
  if (input.rows != d.tokens || input.cols != d.model_dim) {
    throw ContractError("forward_block: input is " + std::to_string(input.rows) + "x" +
                        std::to_string(input.cols) + ", block expects " +
                        std::to_string(d.tokens) + "x" + std::to_string(d.model_dim));
  }
  if (plans != nullptr && mode != Mode::kInteger) {
    throw ContractError("forward_block: quantization plans need integer mode");
  }
  Pipeline pipe(mode, format);
  const std::size_t head_dim = d.model_dim / d.heads;
  const double score_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  // Attention.
  const Matrix h1 = pipe.layernorm(input, block.ln1_gamma, block.ln1_beta);
  const GroupPlan* ln1_plan = plans ? &plans->ln1 : nullptr;
  const Matrix q = project(h1, block.wq, block.bq, ln1_plan);
  const Matrix k = project(h1, block.wk, block.bk, ln1_plan);
  const Matrix v = project(h1, block.wv, block.bv, ln1_plan);

  Matrix concat(d.tokens, d.model_dim);
  Matrix probs_all;
  for (std::size_t h = 0; h < d.heads; ++h) {
    const Matrix qh = slice_cols(q, h * head_dim, head_dim);
    const Matrix kh = slice_cols(k, h * head_dim, head_dim);
    const Matrix vh = slice_cols(v, h * head_dim, head_dim);
    Matrix scores = matmul(qh, transpose(kh));
    for (double& s : scores.data) s *= score_scale;
    pipe.softmax_rows(scores);
    if (capture) append_rows(probs_all, scores);
    const Matrix oh = plans ? quantized_matmul(scores, plans->attention, vh) : matmul(scores, vh);
    for (std::size_t r = 0; r < d.tokens; ++r)
      for (std::size_t c = 0; c < head_dim; ++c) concat(r, h * head_dim + c) = oh(r, c);
  }
  Matrix y = project(concat, block.wo, block.bo, nullptr);
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += input.data[i];

  // MLP.
  const Matrix h2 = pipe.layernorm(y, block.ln2_gamma, block.ln2_beta);
  Matrix a = project(h2, block.w1, block.b1, plans ? &plans->ln2 : nullptr);
  pipe.gelu(a);
  Matrix out = project(a, block.w2, block.b2, plans ? &plans->gelu : nullptr);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += y.data[i];

  if (capture) {
    capture->ln1 = h1;
    capture->attention = probs_all;
    capture->gelu = a;
    capture->ln2 = h2;
  }
  pipe.result.output = std::move(out);
  return pipe.result;
}

BlockPlans calibrate_block(const SyntheticBlock& block, const QuantSettings& settings,
                           std::size_t batches, std::uint64_t seed) {
  if (batches == 0) throw ContractError("calibrate_block: need at least one batch");
  if (settings.groups == 0) throw ContractError("calibrate_block: groups must be positive");
  SiteActivations all;
  for (std::size_t b = 0; b < batches; ++b) {
    SiteActivations site;
    forward_block(block, block.sample_input(seed + b), Mode::kInteger, nullptr, &site);
    append_rows(all.ln1, site.ln1);
    append_rows(all.attention, site.attention);
    append_rows(all.gelu, site.gelu);
    append_rows(all.ln2, site.ln2);
  }
  const auto plan_for = [&](const Matrix& m) {
    return make_group_plan(m, std::min(settings.groups, m.cols), settings.bits,
                           settings.clamp_percentile);
  };
  return {plan_for(all.ln1), plan_for(all.attention), plan_for(all.gelu), plan_for(all.ln2)};
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 && nb == 0.0) return 1.0;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

SimulationResult simulate_block(const SyntheticBlock& block, const QuantSettings& settings,
                                std::uint64_t input_seed) {
  const Matrix input = block.sample_input(input_seed);
  const BlockPlans plans = calibrate_block(block, settings, kCalibrationBatches, input_seed + 1);
  SimulationResult res;
  res.reference = forward_block(block, input, Mode::kFloat);
  res.integer = forward_block(block, input, Mode::kInteger, &plans);

  const auto& ref = res.reference.output.data;
  const auto& got = res.integer.output.data;
  res.cosine_similarity = cosine_similarity(got, ref);
  double ref_max = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double e = std::fabs(got[i] - ref[i]);
    res.max_abs_error = std::max(res.max_abs_error, e);
    ref_max = std::max(ref_max, std::fabs(ref[i]));
    sq += e * e;
  }
  res.max_rel_error = ref_max > 0.0 ? res.max_abs_error / ref_max : 0.0;
  res.mean_squared_error = ref.empty() ? 0.0 : sq / static_cast<double>(ref.size());
  return res;
}

Matrix heavy_tailed_activations(std::size_t rows, std::size_t channels, std::uint64_t seed) {
  Rng rng(seed);
  const std::vector<double> scale = log_uniform(channels, 0.01, 10.0, rng);
  std::exponential_distribution<double> mag(1.0);
  std::bernoulli_distribution sign(0.5);
  Matrix m(rows, channels);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < channels; ++c)
      m(r, c) = (sign(rng) ? 1.0 : -1.0) * mag(rng) * scale[c];
  return m;
}

}  // namespace shiftnl
