// Copyright 2026 The shiftnl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shiftnl/refmodel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "shiftnl/errors.hpp"

namespace shiftnl {

std::vector<double> exact_softmax(std::span<const double> x) {
  if (x.empty()) return {};
  const double m = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += out[i] = std::exp(x[i] - m);
  for (double& v : out) v /= sum;
  return out;
}

double exact_sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double exact_gelu_erf(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double exact_gelu_sigmoid(double x) { return x * exact_sigmoid(1.702 * x); }

std::vector<double> exact_layernorm(std::span<const double> x) {
  std::vector<double> out(x.size(), 0.0);
  if (x.empty()) return out;
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  if (var <= 0.0) return out;
  const double sd = std::sqrt(var);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) / sd;
  return out;
}

namespace {

double parse_number(std::string_view s, std::string_view text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ContractError("bad domain '" + std::string(text) + "' (expected lo:hi:step or int8)");
  }
  return v;
}

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

Domain Domain::parse(std::string_view text) {
  if (text == "int8") return Domain{-128.0, 127.0, 1.0, true};
  const auto c1 = text.find(':');
  const auto c2 = c1 == std::string_view::npos ? c1 : text.find(':', c1 + 1);
  if (c2 == std::string_view::npos) {
    throw ContractError("bad domain '" + std::string(text) + "' (expected lo:hi:step or int8)");
  }
  Domain d;
  d.lo = parse_number(text.substr(0, c1), text);
  d.hi = parse_number(text.substr(c1 + 1, c2 - c1 - 1), text);
  d.step = parse_number(text.substr(c2 + 1), text);
  if (!(d.step > 0.0) || !(d.hi >= d.lo) || !std::isfinite(d.lo) || !std::isfinite(d.hi)) {
    throw ContractError("bad domain '" + std::string(text) + "': need step > 0 and lo <= hi");
  }
  return d;
}

std::vector<double> Domain::points() const {
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = lo + static_cast<double>(i) * step;
  return out;
}

std::string Domain::to_string() const {
  if (int8_grid) return "int8";
  return short_number(lo) + ":" + short_number(hi) + ":" + short_number(step);
}

ErrorReport sweep_error(Kernel kernel, const Domain& domain, const SweepOptions& options) {
  const FxFormat f = options.format;
  ErrorReport rep;
  rep.kernel = std::string(kernel_name(kernel));
  rep.domain = domain.to_string();
  double sq_sum = 0.0;
  std::size_t terms = 0;

  const auto record = [&](double x, double approx, double exact) {
    const double abs_err = std::fabs(approx - exact);
    const double rel_err = exact != 0.0 ? abs_err / std::fabs(exact) : 0.0;
    if (terms == 0 || abs_err > rep.max_abs_error) {
      rep.max_abs_error = abs_err;
      rep.argmax_abs = x;
    }
    if (rel_err > rep.max_rel_error) {
      rep.max_rel_error = rel_err;
      rep.argmax_rel = x;
    }
    sq_sum += abs_err * abs_err;
    ++terms;
    return PointError{x, approx, exact, abs_err, rel_err};
  };

  for (double x : domain.points()) {
    OpCounter c;
    const FxValue fx = fx_from_real(x, f);
    PointError worst;
    switch (kernel) {
      case Kernel::kExp: {
        if (x > 0.0 && !options.extended) {
          throw ContractError("exp sweep requires x <= 0 (use the extended mode for x > 0)");
        }
        const FxValue r = options.extended ? appro_exp_extended(fx, c) : appro_exp(fx, c);
        worst = record(x, r.to_real(), std::exp(x));
        break;
      }
      case Kernel::kLn:
        if (!(x > 0.0)) throw DomainError("ln sweep requires x > 0");
        worst = record(x, appro_ln(fx, c).to_real(), std::log(x));
        break;
      case Kernel::kSigmoid:
        worst = record(x, sigmoid_int(fx, c).to_real(), exact_sigmoid(x));
        break;
      case Kernel::kGelu:
        worst = record(x, gelu_int(fx, c).to_real(), exact_gelu_erf(x));
        break;
      case Kernel::kIsqrt:
        if (x < 0.0) throw DomainError("isqrt sweep requires x >= 0");
        worst = record(x, newton_isqrt(fx, c).root.to_real(), std::sqrt(x));
        break;
      case Kernel::kSoftmax:
      case Kernel::kLayerNorm: {
        const std::vector<double> in = kernel == Kernel::kSoftmax ? std::vector<double>{x, 0.0}
                                                                  : std::vector<double>{0.0, 1.0, x};
        std::vector<FxValue> fin;
        for (double v : in) fin.push_back(fx_from_real(v, f));
        const std::vector<FxValue> out =
            kernel == Kernel::kSoftmax ? softmax_int(fin, c) : layernorm_int(fin, c);
        const std::vector<double> ref =
            kernel == Kernel::kSoftmax ? exact_softmax(in) : exact_layernorm(in);
        for (std::size_t i = 0; i < out.size(); ++i) {
          const PointError p = record(x, out[i].to_real(), ref[i]);
          if (i == 0 || p.abs_error > worst.abs_error) worst = p;
        }
        break;
      }
    }
    if (options.keep_points) rep.points.push_back(worst);
    ++rep.samples;
  }
  rep.mean_squared_error = terms == 0 ? 0.0 : sq_sum / static_cast<double>(terms);
  return rep;
}

}  // namespace shiftnl
