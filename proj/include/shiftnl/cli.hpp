// Copyright 2026 The shiftnl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include <json.hpp>

#include "shiftnl/refmodel.hpp"

namespace shiftnl {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kReportSchemaVersion = 1;

enum ExitCode : int {
  kExitOk = 0,
  kExitBoundViolation = 1,
  kExitUsage = 2,
};

/// Entry point of the `shiftnl` tool. Never throws; returns an ExitCode.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Expectations file: frozen regression bounds per kernel and sweep domain.
//
//   {"schema_version": 1,
//    "bounds": {"gelu": {"-6:6:0.001": {"max_abs_error": ..., "max_rel_error": ...}}}}
struct FrozenBound {
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
};

/// Default location compiled in at build time.
std::filesystem::path default_expectations_path();
nlohmann::json load_expectations(const std::filesystem::path& path);
std::optional<FrozenBound> frozen_bound(const nlohmann::json& expectations, std::string_view kernel,
                                        std::string_view domain);
void freeze_bound(nlohmann::json& expectations, const ErrorReport& report);
void save_expectations(const std::filesystem::path& path, const nlohmann::json& expectations);

nlohmann::json error_report_to_json(const ErrorReport& report);
nlohmann::json op_counter_to_json(const OpCounter& counter);

}  // namespace shiftnl
