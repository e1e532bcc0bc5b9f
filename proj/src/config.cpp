// Copyright 2026 The shiftnl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <bit>
#include <fstream>
#include <set>
#include <sstream>

#include "shiftnl/errors.hpp"
#include "shiftnl/tensorio.hpp"

namespace shiftnl {
namespace {

using nlohmann::json;

const std::set<std::string> kTopKeys = {
    "fx_total_bits", "fx_frac_bits",     "quant_bits", "bop_budget", "candidate_groups",
    "clamp_percentile", "seed",          "sweep_domains", "block",  "preset",
    "groups"};
const std::set<std::string> kBlockKeys = {"tokens", "heads", "model_dim", "mlp_dim"};

template <typename T>
T get_field(const json& j, const std::string& field) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(field, "wrong type");
  }
}

std::int64_t get_int(const json& j, const std::string& field) {
  if (!j.is_number_integer()) throw ConfigError(field, "expected an integer");
  return j.get<std::int64_t>();
}

std::size_t get_positive(const json& j, const std::string& field) {
  const std::int64_t v = get_int(j, field);
  if (v < 1) throw ConfigError(field, "must be positive");
  return static_cast<std::size_t>(v);
}

}  // namespace

std::string default_sweep_domain(std::string_view kernel) {
  if (kernel == "exp") return "-8:0:0.001";
  if (kernel == "ln") return "1:256:0.01";
  if (kernel == "softmax") return "-16:0:0.01";
  if (kernel == "sigmoid") return "-8:8:0.001";
  if (kernel == "gelu") return "-6:6:0.001";
  if (kernel == "isqrt") return "0:16384:0.25";
  if (kernel == "layernorm") return "-128:127:0.25";
  return "int8";
}

std::string RunConfig::sweep_domain(std::string_view kernel) const {
  const auto it = sweep_domains.find(std::string(kernel));
  return it != sweep_domains.end() ? it->second : default_sweep_domain(kernel);
}

RunConfig parse_config(std::string_view text, bool strict) {
  RunConfig cfg;
  if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) {
    return cfg;
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("<document>", std::string("not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("<document>", "expected a JSON object");
  if (strict) {
    for (const auto& [key, _] : j.items()) {
      if (!kTopKeys.contains(key)) throw ConfigError(key, "unknown key");
    }
  }

  int total = cfg.format.total_bits;
  int frac = cfg.format.frac_bits;
  if (j.contains("fx_total_bits")) total = static_cast<int>(get_int(j["fx_total_bits"], "fx_total_bits"));
  if (j.contains("fx_frac_bits")) frac = static_cast<int>(get_int(j["fx_frac_bits"], "fx_frac_bits"));
  if (total < 2 || total > 63) throw ConfigError("fx_total_bits", "must lie in [2, 63]");
  if (frac < 1 || frac >= total) throw ConfigError("fx_frac_bits", "must lie in [1, fx_total_bits)");
  cfg.format = FxFormat::make(total, frac);

  if (j.contains("quant_bits")) {
    cfg.quant_bits = static_cast<int>(get_int(j["quant_bits"], "quant_bits"));
    if (cfg.quant_bits != 4 && cfg.quant_bits != 6 && cfg.quant_bits != 8 &&
        cfg.quant_bits != 16 && cfg.quant_bits != 32) {
      throw ConfigError("quant_bits", "must be one of 4, 6, 8, 16, 32");
    }
  }
  if (j.contains("bop_budget") && !j["bop_budget"].is_null()) {
    const std::int64_t b = get_int(j["bop_budget"], "bop_budget");
    if (b < 0) throw ConfigError("bop_budget", "must be non-negative");
    cfg.bop_budget = b;
  }
  if (j.contains("candidate_groups")) {
    if (!j["candidate_groups"].is_array() || j["candidate_groups"].empty()) {
      throw ConfigError("candidate_groups", "expected a non-empty array");
    }
    cfg.candidate_groups.clear();
    for (const json& g : j["candidate_groups"]) {
      const std::size_t v = get_positive(g, "candidate_groups");
      if (!std::has_single_bit(v)) throw ConfigError("candidate_groups", "entries must be powers of two");
      cfg.candidate_groups.push_back(v);
    }
  }
  if (j.contains("clamp_percentile")) {
    if (!j["clamp_percentile"].is_number()) throw ConfigError("clamp_percentile", "expected a number");
    cfg.clamp_percentile = j["clamp_percentile"].get<double>();
    if (!(cfg.clamp_percentile > 50.0 && cfg.clamp_percentile <= 100.0)) {
      throw ConfigError("clamp_percentile", "must lie in (50, 100]");
    }
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ConfigError("seed", "expected a non-negative integer");
    cfg.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("sweep_domains")) {
    if (!j["sweep_domains"].is_object()) throw ConfigError("sweep_domains", "expected an object");
    for (const auto& [kernel, dom] : j["sweep_domains"].items()) {
      const std::string field = "sweep_domains." + kernel;
      try {
        parse_kernel(kernel);
        Domain::parse(get_field<std::string>(dom, field));
      } catch (const ContractError& e) {
        throw ConfigError(field, e.what());
      }
      cfg.sweep_domains[kernel] = dom.get<std::string>();
    }
  }
  if (j.contains("block")) {
    const json& b = j["block"];
    if (!b.is_object()) throw ConfigError("block", "expected an object");
    for (const auto& [key, value] : b.items()) {
      const std::string field = "block." + key;
      if (key == "tokens") cfg.block.tokens = get_positive(value, field);
      else if (key == "heads") cfg.block.heads = get_positive(value, field);
      else if (key == "model_dim") cfg.block.model_dim = get_positive(value, field);
      else if (key == "mlp_dim") cfg.block.mlp_dim = get_positive(value, field);
      else if (strict) throw ConfigError(field, "unknown key");
    }
    if (cfg.block.model_dim < 2) throw ConfigError("block.model_dim", "must be at least 2");
    if (cfg.block.model_dim % cfg.block.heads != 0) {
      throw ConfigError("block.heads", "must divide block.model_dim");
    }
  }
  if (j.contains("preset")) {
    try {
      cfg.preset = parse_preset(get_field<std::string>(j["preset"], "preset"));
    } catch (const ContractError& e) {
      throw ConfigError("preset", e.what());
    }
  }
  if (j.contains("groups")) cfg.groups = get_positive(j["groups"], "groups");
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, bool strict) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), strict);
}

json config_to_json(const RunConfig& c) {
  json j;
  j["fx_total_bits"] = c.format.total_bits;
  j["fx_frac_bits"] = c.format.frac_bits;
  j["quant_bits"] = c.quant_bits;
  j["bop_budget"] = c.bop_budget ? json(*c.bop_budget) : json(nullptr);
  j["candidate_groups"] = c.candidate_groups;
  j["clamp_percentile"] = c.clamp_percentile;
  j["seed"] = c.seed;
  j["sweep_domains"] = c.sweep_domains;
  j["block"] = {{"tokens", c.block.tokens},
                {"heads", c.block.heads},
                {"model_dim", c.block.model_dim},
                {"mlp_dim", c.block.mlp_dim}};
  j["preset"] = std::string(preset_name(c.preset));
  j["groups"] = c.groups;
  return j;
}

}  // namespace shiftnl
