// Copyright 2026 The shiftnl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shiftnl/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <ostream>

#include <CLI11.hpp>

#include "shiftnl/calib.hpp"
#include "shiftnl/errors.hpp"
#include "shiftnl/groupquant.hpp"
#include "shiftnl/tensorio.hpp"

#ifndef SHIFTNL_EXPECTATIONS_PATH
#define SHIFTNL_EXPECTATIONS_PATH "expectations/bounds.json"
#endif

namespace shiftnl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string> kKernelNames = {"exp",  "ln",    "softmax", "sigmoid",
                                               "gelu", "isqrt", "layernorm"};

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json make_report(const std::string& command, const RunConfig& cfg, json metrics,
                 std::uint64_t seed) {
  return json{{"schema", "shiftnl.report"},
              {"schema_version", kReportSchemaVersion},
              {"command", command},
              {"config", config_to_json(cfg)},
              {"metrics", std::move(metrics)},
              {"provenance", {{"seed", seed}, {"version", kVersion}, {"timestamp", utc_timestamp()}}}};
}

void emit(const json& report, const std::string& out_path, std::ostream& out) {
  if (out_path.empty()) {
    out << report.dump(2) << '\n';
    return;
  }
  std::ofstream f(out_path, std::ios::trunc);
  if (!f) throw Error("cannot open " + out_path + " for writing");
  f << report.dump(2) << '\n';
}

RunConfig config_from(const std::string& path) {
  return path.empty() ? RunConfig{} : load_config(path);
}

std::uint64_t fnv1a(std::span<const double> values) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : values) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof v);
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

Matrix stack_rows(std::span<const Matrix> parts) {
  Matrix out(0, parts.front().cols);
  for (const Matrix& m : parts) {
    out.data.insert(out.data.end(), m.data.begin(), m.data.end());
    out.rows += m.rows;
  }
  return out;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepArgs {
  std::string kernel, domain, config, out, csv, expectations;
  bool extended = false;
  bool freeze = false;
};

int cmd_sweep(const SweepArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = config_from(a.config);
  const Kernel kernel = parse_kernel(a.kernel);
  const Domain domain = Domain::parse(a.domain.empty() ? cfg.sweep_domain(a.kernel) : a.domain);

  std::string csv_path = a.csv;
  if (csv_path.empty() && !a.out.empty()) csv_path = fs::path(a.out).replace_extension(".csv").string();

  SweepOptions opts;
  opts.format = cfg.format;
  opts.extended = a.extended;
  opts.keep_points = !csv_path.empty();
  const ErrorReport rep = sweep_error(kernel, domain, opts);

  if (!csv_path.empty()) {
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw Error("cannot open " + csv_path + " for writing");
    csv.precision(17);
    csv << "x,approx,exact,abs_error,rel_error\n";
    for (const PointError& p : rep.points) {
      csv << p.x << ',' << p.approx << ',' << p.exact << ',' << p.abs_error << ',' << p.rel_error
          << '\n';
    }
  }

  const fs::path exp_path = a.expectations.empty() ? default_expectations_path() : fs::path(a.expectations);
  json expectations = load_expectations(exp_path);
  if (a.freeze) {
    freeze_bound(expectations, rep);
    save_expectations(exp_path, expectations);
  }

  json metrics{{"error", error_report_to_json(rep)}, {"extended", a.extended}};
  const auto bound = frozen_bound(expectations, rep.kernel, rep.domain);
  bool ok = true;
  if (bound) {
    ok = rep.max_abs_error <= bound->max_abs_error && rep.max_rel_error <= bound->max_rel_error;
    metrics["frozen_bound"] = {{"max_abs_error", bound->max_abs_error},
                               {"max_rel_error", bound->max_rel_error}};
    metrics["within_bound"] = ok;
  } else {
    metrics["frozen_bound"] = nullptr;
    metrics["within_bound"] = nullptr;
  }
  if (!csv_path.empty()) metrics["csv"] = csv_path;
  emit(make_report("sweep", cfg, std::move(metrics), cfg.seed), a.out, out);
  if (!ok) {
    err << "sweep: " << rep.kernel << " on " << rep.domain << " exceeds its frozen bound\n";
    return kExitBoundViolation;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// calibrate

struct CalibLayer {
  std::string name;
  std::vector<fs::path> files;
};

std::vector<fs::path> tensor_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".qtns") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<CalibLayer> discover_layers(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ContractError(dir.string() + " is not a directory");
  std::vector<fs::path> subdirs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) subdirs.push_back(e.path());
  }
  std::sort(subdirs.begin(), subdirs.end());
  std::vector<CalibLayer> layers;
  if (subdirs.empty()) {
    fs::path norm = fs::absolute(dir).lexically_normal();
    if (norm.filename().empty()) norm = norm.parent_path();
    layers.push_back({norm.filename().string(), tensor_files(dir)});
  } else {
    for (const fs::path& d : subdirs) layers.push_back({d.filename().string(), tensor_files(d)});
  }
  for (const CalibLayer& l : layers) {
    if (l.files.empty()) throw ContractError("no .qtns samples for layer '" + l.name + "'");
  }
  return layers;
}

std::vector<Matrix> load_samples(const CalibLayer& layer) {
  std::vector<Matrix> samples;
  for (const fs::path& f : layer.files) {
    Matrix m = read_tensor(f).as_matrix();
    if (!samples.empty() && m.cols != samples.front().cols) {
      throw ContractError(f.string() + ": " + std::to_string(m.cols) + " channels, expected " +
                          std::to_string(samples.front().cols));
    }
    samples.push_back(std::move(m));
  }
  return samples;
}

int cmd_calibrate(const std::string& dir, const std::string& config, const std::string& out_path,
                  std::ostream& out, std::ostream& err) {
  const RunConfig cfg = config_from(config);
  const std::vector<CalibLayer> layers = discover_layers(dir);

  std::vector<std::vector<Matrix>> samples;
  std::vector<LayerStats> stats;
  AllocationProblem problem;
  problem.bits = cfg.quant_bits;
  problem.budget = cfg.bop_budget;
  for (const CalibLayer& l : layers) {
    samples.push_back(load_samples(l));
    stats.push_back(collect_stats(samples.back()));
    LayerCandidates cand;
    cand.channels = stats.back().channels.size();
    cand.group_counts = feasible_group_counts(cfg.candidate_groups, cand.channels);
    for (std::size_t g : cand.group_counts) {
      cand.costs.push_back(kl_cost(stats.back(), samples.back(), g, cfg.quant_bits, cfg.clamp_percentile));
    }
    problem.layers.push_back(std::move(cand));
  }
  const Allocation alloc = allocate_groups(problem);

  std::vector<LayerPlanRecord> records;
  json layer_metrics = json::array();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerStats& s = stats[i];
    const bool degenerate = s.global_min == s.global_max;
    if (degenerate) {
      err << "warning: layer '" << layers[i].name
          << "' has constant activations; its plan is degenerate (all k = 0)\n";
    }
    GroupPlan plan = make_group_plan(stack_rows(samples[i]), alloc.groups[i], cfg.quant_bits,
                                     cfg.clamp_percentile);
    json ch = json::array();
    for (const ChannelStats& c : s.channels) {
      ch.push_back({{"min", c.min}, {"max", c.max}, {"mean", c.mean}, {"variance", c.variance}});
    }
    json extra{{"samples", layers[i].files.size()},
               {"global_min", s.global_min},
               {"global_max", s.global_max},
               {"channel_stats", std::move(ch)},
               {"candidate_groups", problem.layers[i].group_counts},
               {"kl_costs", problem.layers[i].costs},
               {"degenerate", degenerate}};
    layer_metrics.push_back({{"name", layers[i].name},
                             {"channels", plan.channels()},
                             {"groups", alloc.groups[i]},
                             {"bop", bop_cost(plan.channels(), cfg.quant_bits, alloc.groups[i])},
                             {"kl_costs", problem.layers[i].costs},
                             {"candidate_groups", problem.layers[i].group_counts},
                             {"k", plan.k},
                             {"degenerate", degenerate}});
    records.push_back({layers[i].name, std::move(plan), std::move(extra)});
  }

  json metrics{{"layers", layer_metrics},
               {"allocation",
                {{"objective", alloc.objective},
                 {"total_bop", alloc.total_bop},
                 {"budget", cfg.bop_budget ? json(*cfg.bop_budget) : json(nullptr)}}}};
  if (!out_path.empty()) {
    write_plan_file(out_path, records,
                    json{{"bits", cfg.quant_bits}, {"clamp_percentile", cfg.clamp_percentile}});
    metrics["plan"] = out_path;
  } else {
    json plans = json::array();
    for (const LayerPlanRecord& r : records) {
      json p = plan_to_json(r.plan);
      p["name"] = r.name;
      plans.push_back(std::move(p));
    }
    metrics["plans"] = std::move(plans);
  }
  out << make_report("calibrate", cfg, std::move(metrics), cfg.seed).dump(2) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// quantize

int cmd_quantize(const std::string& tensor_path, const std::string& plan_path,
                 const std::string& layer, const std::string& out_path, std::ostream& out) {
  const std::vector<LayerPlanRecord> plans = read_plan_file(plan_path);
  if (plans.empty()) throw ContractError(plan_path + ": no layers");
  const LayerPlanRecord* chosen = nullptr;
  if (layer.empty()) {
    if (plans.size() != 1) throw ContractError("plan has several layers; pass --layer");
    chosen = &plans.front();
  } else {
    for (const LayerPlanRecord& r : plans) {
      if (r.name == layer) chosen = &r;
    }
    if (!chosen) throw ContractError("layer '" + layer + "' not in " + plan_path);
  }
  const GroupPlan& plan = chosen->plan;
  const Matrix x = read_tensor(fs::path(tensor_path)).as_matrix();
  if (x.cols != plan.channels()) {
    throw ContractError(tensor_path + ": " + std::to_string(x.cols) + " channels, plan '" +
                        chosen->name + "' expects " + std::to_string(plan.channels()));
  }
  const QuantizedGroupTensor q = quantize_group_tensor(x, plan);
  const Matrix back = dequantize_group_tensor(q);
  double sq = 0.0;
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < x.data.size(); ++i) sq += (x.data[i] - back.data[i]) * (x.data[i] - back.data[i]);
  for (std::int32_t c : q.codes) clamped += std::abs(static_cast<std::int64_t>(c)) == plan.q_max;
  const double mse = x.data.empty() ? 0.0 : sq / static_cast<double>(x.data.size());

  // Codes stay in permuted channel order. A single scale describes them only
  // when every group shares the base step.
  const bool uniform = std::all_of(plan.k.begin(), plan.k.end(), [](int k) { return k == 0; });
  const std::optional<double> scale = uniform ? std::optional<double>(plan.base_scale) : std::nullopt;
  const std::vector<std::size_t> shape{q.rows, plan.channels()};
  if (!out_path.empty()) {
    if (plan.bits <= 8) {
      std::vector<std::int8_t> codes(q.codes.begin(), q.codes.end());
      write_tensor(fs::path(out_path), Tensor(shape, std::move(codes), scale));
    } else {
      write_tensor(fs::path(out_path), Tensor(shape, q.codes, scale));
    }
  }
  RunConfig cfg;
  cfg.quant_bits = plan.bits;
  json metrics{{"layer", chosen->name},
               {"rows", q.rows},
               {"channels", plan.channels()},
               {"groups", plan.num_groups()},
               {"bits", plan.bits},
               {"reconstruction_mse", mse},
               {"clamped_codes", clamped},
               {"base_scale", plan.base_scale},
               {"k", plan.k},
               {"output", out_path.empty() ? json(nullptr) : json(out_path)}};
  out << make_report("quantize", cfg, std::move(metrics), cfg.seed).dump(2) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string config, out, preset;
  std::optional<std::uint64_t> seed;
  std::optional<int> bits;
  std::optional<std::size_t> groups;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  RunConfig cfg = config_from(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (a.bits) {
    json patch = config_to_json(cfg);
    patch["quant_bits"] = *a.bits;
    cfg = parse_config(patch.dump());
  }
  if (a.groups) {
    if (*a.groups < 1) throw ConfigError("groups", "must be positive");
    cfg.groups = *a.groups;
  }
  if (!a.preset.empty()) cfg.preset = parse_preset(a.preset);

  const SyntheticBlock block = SyntheticBlock::make(cfg.block, cfg.seed, cfg.preset);
  const QuantSettings settings{cfg.quant_bits, cfg.groups, cfg.clamp_percentile};
  const SimulationResult r = simulate_block(block, settings, cfg.seed);

  json metrics{{"cosine_similarity", r.cosine_similarity},
               {"max_abs_error", r.max_abs_error},
               {"max_rel_error", r.max_rel_error},
               {"mean_squared_error", r.mean_squared_error},
               {"fixed_point_overflow", r.integer.fixed_point_overflow},
               {"output_digest", fnv1a(r.integer.output.data)},
               {"op_counts",
                {{"softmax", op_counter_to_json(r.integer.softmax_ops)},
                 {"gelu", op_counter_to_json(r.integer.gelu_ops)},
                 {"layernorm", op_counter_to_json(r.integer.layernorm_ops)}}}};
  emit(make_report("simulate", cfg, std::move(metrics), cfg.seed), a.out, out);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// census

int cmd_census(const std::string& kernel_name_arg, std::size_t size, const std::string& config,
               std::ostream& out, std::ostream& err) {
  const RunConfig cfg = config_from(config);
  const Kernel kernel = parse_kernel(kernel_name_arg);
  const OpCounter c = op_census(kernel, size, cfg.format);
  json metrics{{"kernel", kernel_name_arg}, {"size", size}, {"ops", op_counter_to_json(c)}};
  out << make_report("census", cfg, std::move(metrics), cfg.seed).dump(2) << '\n';
  if (c.divides != 0) {
    err << "census: " << kernel_name_arg << " used " << c.divides << " division primitives\n";
    return kExitBoundViolation;
  }
  return kExitOk;
}

}  // namespace

// ---------------------------------------------------------------------------
// Expectations

fs::path default_expectations_path() { return SHIFTNL_EXPECTATIONS_PATH; }

json load_expectations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return json{{"schema_version", 1}, {"bounds", json::object()}};
  try {
    json j = json::parse(in);
    if (!j.contains("bounds")) j["bounds"] = json::object();
    return j;
  } catch (const json::exception& e) {
    throw ContractError(path.string() + ": " + e.what());
  }
}

std::optional<FrozenBound> frozen_bound(const json& expectations, std::string_view kernel,
                                        std::string_view domain) {
  const json& b = expectations.at("bounds");
  const std::string k(kernel), d(domain);
  if (!b.contains(k) || !b[k].contains(d)) return std::nullopt;
  const json& e = b[k][d];
  return FrozenBound{e.at("max_abs_error").get<double>(), e.at("max_rel_error").get<double>()};
}

void freeze_bound(json& expectations, const ErrorReport& report) {
  expectations["schema_version"] = 1;
  expectations["bounds"][report.kernel][report.domain] = {
      {"max_abs_error", report.max_abs_error},
      {"max_rel_error", report.max_rel_error},
      {"samples", report.samples}};
}

void save_expectations(const fs::path& path, const json& expectations) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << expectations.dump(2) << '\n';
}

json error_report_to_json(const ErrorReport& r) {
  return json{{"kernel", r.kernel},
              {"domain", r.domain},
              {"samples", r.samples},
              {"max_abs_error", r.max_abs_error},
              {"max_rel_error", r.max_rel_error},
              {"mean_squared_error", r.mean_squared_error},
              {"argmax_abs", r.argmax_abs},
              {"argmax_rel", r.argmax_rel}};
}

json op_counter_to_json(const OpCounter& c) {
  return json{{"adds", c.adds},       {"shifts", c.shifts},   {"mults", c.mults},
              {"compares", c.compares}, {"divides", c.divides}, {"iterations", c.iterations}};
}

// ---------------------------------------------------------------------------

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Integer-only transformer nonlinearities and group quantization", "shiftnl"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "Error sweep of an integer kernel against its oracle");
  sweep->add_option("--kernel", sw.kernel, "Kernel name")->required()->check(CLI::IsMember(kKernelNames));
  sweep->add_option("--domain", sw.domain, "lo:hi:step or int8 (default from config)");
  sweep->add_option("--config", sw.config, "Run configuration (JSON)");
  sweep->add_option("--out", sw.out, "Report path (default stdout)");
  sweep->add_option("--csv", sw.csv, "Pointwise CSV path (default <out>.csv)");
  sweep->add_option("--expectations", sw.expectations, "Frozen bounds file");
  sweep->add_flag("--extended", sw.extended, "Allow x > 0 for exp");
  sweep->add_flag("--freeze", sw.freeze, "Record the measured errors as frozen bounds");

  std::string cal_dir, cal_config, cal_out;
  auto* calibrate = app.add_subcommand("calibrate", "Build group plans from activation samples");
  calibrate->add_option("--activations", cal_dir, "Directory of .qtns samples, one subdirectory per layer")
      ->required();
  calibrate->add_option("--config", cal_config, "Run configuration (JSON)");
  calibrate->add_option("--out", cal_out, "Plan file path");

  std::string q_tensor, q_plan, q_layer, q_out;
  auto* quantize = app.add_subcommand("quantize", "Group-quantize a tensor with a calibrated plan");
  quantize->add_option("--tensor", q_tensor, "Input .qtns tensor")->required();
  quantize->add_option("--plan", q_plan, "Plan file")->required();
  quantize->add_option("--layer", q_layer, "Layer name within the plan");
  quantize->add_option("--out", q_out, "Output .qtns for the codes");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Float vs integer synthetic block");
  simulate->add_option("--config", sim.config, "Run configuration (JSON)");
  simulate->add_option("--seed", sim.seed, "Seed (overrides config)");
  simulate->add_option("--out", sim.out, "Report path (default stdout)");
  simulate->add_option("--bits", sim.bits, "Quantization bits (overrides config)");
  simulate->add_option("--groups", sim.groups, "Group count (overrides config)");
  simulate->add_option("--preset", sim.preset, "standard or heavy_tailed")
      ->check(CLI::IsMember({"standard", "heavy_tailed"}));

  std::string cen_kernel, cen_config;
  std::size_t cen_size = 16;
  auto* census = app.add_subcommand("census", "Count primitive operations of a kernel");
  census->add_option("--kernel", cen_kernel, "Kernel name")->required()->check(CLI::IsMember(kKernelNames));
  census->add_option("--size", cen_size, "Input length")->check(CLI::PositiveNumber);
  census->add_option("--config", cen_config, "Run configuration (JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*sweep) return cmd_sweep(sw, out, err);
    if (*calibrate) return cmd_calibrate(cal_dir, cal_config, cal_out, out, err);
    if (*quantize) return cmd_quantize(q_tensor, q_plan, q_layer, q_out, out);
    if (*simulate) return cmd_simulate(sim, out);
    if (*census) return cmd_census(cen_kernel, cen_size, cen_config, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace shiftnl
