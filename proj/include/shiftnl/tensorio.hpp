// Copyright 2026 The shiftnl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "shiftnl/fxp.hpp"
#include "shiftnl/groupquant.hpp"
#include "shiftnl/refmodel.hpp"
#include "shiftnl/tensor.hpp"

namespace shiftnl {

// Tensor container layout:
//
//   "QTNS1\n"
//   one-line JSON header, e.g.
//     {"byte_order":"little","kind":"i8","scale":0.02,"shape":[4,8]}
//   "\n"
//   row-major payload, little-endian, exactly prod(shape) * sizeof(kind) bytes
inline constexpr std::string_view kTensorMagic = "QTNS1";

void write_tensor(std::ostream& out, const Tensor& t);
/// Throws FramingError on bad magic, malformed header, unsupported kind or a
/// payload whose length disagrees with the shape.
Tensor read_tensor(std::istream& in);

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

struct RunConfig {
  FxFormat format = kQ16_16;
  int quant_bits = 8;
  std::optional<std::int64_t> bop_budget;  // absent or null: unconstrained
  std::vector<std::size_t> candidate_groups{1, 2, 4, 8};
  double clamp_percentile = 99.9;
  std::uint64_t seed = 42;
  std::map<std::string, std::string> sweep_domains;  // kernel -> domain text
  BlockDims block;
  Preset preset = Preset::kStandard;
  std::size_t groups = 8;  // simulate

  std::int64_t q_max() const { return q_max_for_bits(quant_bits); }
  /// Configured domain for a kernel, or the built-in default.
  std::string sweep_domain(std::string_view kernel) const;
};

/// Parses JSON text. Empty text yields the defaults. Throws ConfigError
/// naming the field for invalid values, and for unknown keys when `strict`.
RunConfig parse_config(std::string_view text, bool strict = true);
RunConfig load_config(const std::filesystem::path& path, bool strict = true);
nlohmann::json config_to_json(const RunConfig& config);

/// Default sweep domain per kernel name.
std::string default_sweep_domain(std::string_view kernel);

// Plan file: {"schema": "shiftnl.plan", "schema_version": 1, "layers": [...]}.
struct LayerPlanRecord {
  std::string name;
  GroupPlan plan;
  nlohmann::json extra;  // stats, KL costs; carried through untouched
};

nlohmann::json plan_to_json(const GroupPlan& plan);
/// Throws ContractError when the plan is malformed.
GroupPlan plan_from_json(const nlohmann::json& j);

void write_plan_file(const std::filesystem::path& path, const std::vector<LayerPlanRecord>& layers,
                     const nlohmann::json& header = nlohmann::json::object());
std::vector<LayerPlanRecord> read_plan_file(const std::filesystem::path& path);

}  // namespace shiftnl
