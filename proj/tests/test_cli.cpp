// Copyright 2026 The shiftnl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "shiftnl/cli.hpp"
#include "shiftnl/groupquant.hpp"
#include "shiftnl/tensorio.hpp"

using namespace shiftnl;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
  json report() const { return json::parse(out); }
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "shiftnl");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("shiftnl_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write_config(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
  }

  fs::path dir_;
};

Matrix two_scale_channels(std::size_t rows, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Matrix m(rows, 8);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < 8; ++c) m(r, c) = d(rng) * (c % 2 == 0 ? 0.01 : 10.0);
  return m;
}

}  // namespace

TEST_F(CliTest, UnknownKernelIsUsageError) {
  const CliRun r = run({"sweep", "--kernel", "tanh"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST_F(CliTest, UnknownFlagIsUsageError) {
  EXPECT_EQ(run({"census", "--kernel", "exp", "--bogus"}).code, kExitUsage);
  EXPECT_EQ(run({}).code, kExitUsage);
}

TEST_F(CliTest, ExpPositiveDomainNeedsExtended) {
  const std::string e = path("bounds.json");
  const CliRun r = run({"sweep", "--kernel", "exp", "--domain", "0:1:0.1", "--expectations", e});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("x <= 0"), std::string::npos);
  EXPECT_EQ(run({"sweep", "--kernel", "exp", "--domain", "0:1:0.1", "--extended", "--expectations", e})
                .code,
            kExitOk);
}

TEST_F(CliTest, SweepReportToStdout) {
  const CliRun r = run({"sweep", "--kernel", "gelu", "--domain", "-6:6:0.001", "--expectations",
                     path("bounds.json")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const json j = r.report();
  EXPECT_EQ(j["command"], "sweep");
  EXPECT_EQ(j["schema_version"], kReportSchemaVersion);
  EXPECT_EQ(j["metrics"]["error"]["samples"], 12001);
  EXPECT_LE(j["metrics"]["error"]["max_abs_error"].get<double>(), 0.03);
  EXPECT_TRUE(j["provenance"].contains("timestamp"));
  EXPECT_EQ(j["provenance"]["version"], kVersion);
}

TEST_F(CliTest, SweepWritesReportAndCsv) {
  const std::string out = path("gelu.json");
  const CliRun r = run({"sweep", "--kernel", "gelu", "--domain", "-1:1:0.5", "--out", out,
                     "--expectations", path("bounds.json")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(r.out.empty());
  std::ifstream rep(out);
  EXPECT_EQ(json::parse(rep)["metrics"]["error"]["samples"], 5);
  std::ifstream csv(path("gelu.csv"));
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  EXPECT_EQ(lines, 6);
}

TEST_F(CliTest, FrozenBoundsGateExitCode) {
  const std::string e = path("bounds.json");
  const std::vector<std::string> base{"sweep", "--kernel", "ln", "--domain", "1:16:0.01",
                                      "--expectations", e};
  std::vector<std::string> freeze = base;
  freeze.push_back("--freeze");
  ASSERT_EQ(run(freeze).code, kExitOk);
  const CliRun ok = run(base);
  EXPECT_EQ(ok.code, kExitOk);
  EXPECT_EQ(ok.report()["metrics"]["within_bound"], true);

  json exp = load_expectations(e);
  exp["bounds"]["ln"]["1:16:0.01"]["max_abs_error"] = 1e-6;
  save_expectations(e, exp);
  const CliRun bad = run(base);
  EXPECT_EQ(bad.code, kExitBoundViolation);
  EXPECT_EQ(bad.report()["metrics"]["within_bound"], false);
}

TEST_F(CliTest, ShippedExpectationsHold) {
  for (const std::string k : {"exp", "ln", "gelu"}) {
    const CliRun r = run({"sweep", "--kernel", k, "--expectations", SHIFTNL_EXPECTATIONS_PATH});
    EXPECT_EQ(r.code, kExitOk) << k << ": " << r.err;
    EXPECT_EQ(r.report()["metrics"]["within_bound"], true) << k;
  }
}

TEST_F(CliTest, ConfigErrorNamesField) {
  write_config("bad.json", R"({"clamp_percentile": 40})");
  const CliRun r = run({"census", "--kernel", "exp", "--config", path("bad.json")});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("clamp_percentile"), std::string::npos);
}

TEST_F(CliTest, CensusSoftmax) {
  const CliRun r = run({"census", "--kernel", "softmax", "--size", "32"});
  ASSERT_EQ(r.code, kExitOk);
  EXPECT_EQ(r.report()["metrics"]["ops"]["mults"], 4 * 32 + 2);
  EXPECT_EQ(r.report()["metrics"]["ops"]["divides"], 0);
}

TEST_F(CliTest, CalibrateConstantSampleWarns) {
  fs::create_directories(path("acts/only"));
  write_tensor(fs::path(path("acts/only/s0.qtns")), Tensor::from_matrix(Matrix(4, 8, 1.5)));
  const CliRun r = run({"calibrate", "--activations", path("acts"), "--out", path("plan.json")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  const auto plans = read_plan_file(path("plan.json"));
  ASSERT_EQ(plans.size(), 1u);
  for (int k : plans[0].plan.k) EXPECT_EQ(k, 0);
}

TEST_F(CliTest, CalibrateSeparatesTwoScales) {
  fs::create_directories(path("acts"));
  for (int i = 0; i < 4; ++i) {
    write_tensor(fs::path(path("acts/s" + std::to_string(i) + ".qtns")),
                 Tensor::from_matrix(two_scale_channels(64, i)));
  }
  write_config("cfg.json", R"({"quant_bits": 4, "candidate_groups": [1, 2], "bop_budget": 32})");
  const CliRun r = run({"calibrate", "--activations", path("acts"), "--config", path("cfg.json"),
                     "--out", path("plan.json")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const GroupPlan p = read_plan_file(path("plan.json"))[0].plan;
  ASSERT_EQ(p.num_groups(), 2u);
  const auto groups = p.channel_groups();
  for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(groups[c], c % 2 == 0 ? 0u : 1u) << c;
  EXPECT_GT(p.k[1], 8);
}

TEST_F(CliTest, CalibrateZeroBudgetGivesSingleGroups) {
  for (const std::string layer : {"a", "b"}) {
    fs::create_directories(path("acts/" + layer));
    write_tensor(fs::path(path("acts/" + layer + "/s.qtns")), Tensor::from_matrix(two_scale_channels(32, 1)));
  }
  write_config("cfg.json", R"({"bop_budget": 0})");
  const CliRun r = run({"calibrate", "--activations", path("acts"), "--config", path("cfg.json")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const json j = r.report();
  ASSERT_EQ(j["metrics"]["layers"].size(), 2u);
  for (const json& l : j["metrics"]["layers"]) EXPECT_EQ(l["groups"], 1);
  EXPECT_EQ(j["metrics"]["allocation"]["total_bop"], 0);
}

TEST_F(CliTest, CalibrateInconsistentShapesNamesFile) {
  fs::create_directories(path("acts"));
  write_tensor(fs::path(path("acts/a.qtns")), Tensor::from_matrix(Matrix(4, 8, 1.0)));
  write_tensor(fs::path(path("acts/b.qtns")), Tensor::from_matrix(Matrix(4, 6, 1.0)));
  const CliRun r = run({"calibrate", "--activations", path("acts")});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("b.qtns"), std::string::npos);
}

TEST_F(CliTest, QuantizeSingleGroupMatchesPerTensor) {
  fs::create_directories(path("acts"));
  const Matrix x = two_scale_channels(64, 3);
  write_tensor(fs::path(path("acts/s.qtns")), Tensor::from_matrix(x));
  write_config("cfg.json", R"({"bop_budget": 0})");
  ASSERT_EQ(run({"calibrate", "--activations", path("acts"), "--config", path("cfg.json"), "--out",
                 path("plan.json")})
                .code,
            kExitOk);
  const CliRun r = run({"quantize", "--tensor", path("acts/s.qtns"), "--plan", path("plan.json"),
                     "--out", path("codes.qtns")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const GroupPlan p = read_plan_file(path("plan.json"))[0].plan;
  const Tensor codes = read_tensor(fs::path(path("codes.qtns")));
  EXPECT_EQ(codes.kind(), ElementKind::kI8);
  ASSERT_TRUE(codes.scale().has_value());
  EXPECT_EQ(*codes.scale(), p.base_scale);
  const std::vector<std::int32_t> expect = quantize_per_tensor(x, p.thresholds[0], p.bits);
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_EQ(codes.at(i), expect[i]);
  EXPECT_GT(r.report()["metrics"]["reconstruction_mse"].get<double>(), 0.0);
}

TEST_F(CliTest, QuantizeChannelMismatchIsError) {
  fs::create_directories(path("acts"));
  write_tensor(fs::path(path("acts/s.qtns")), Tensor::from_matrix(two_scale_channels(16, 1)));
  ASSERT_EQ(run({"calibrate", "--activations", path("acts"), "--out", path("plan.json")}).code, kExitOk);
  write_tensor(fs::path(path("other.qtns")), Tensor::from_matrix(Matrix(4, 5, 1.0)));
  const CliRun r = run({"quantize", "--tensor", path("other.qtns"), "--plan", path("plan.json")});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("channels"), std::string::npos);
}

TEST_F(CliTest, SimulateDeterministicModuloTimestamp) {
  CliRun a = run({"simulate", "--seed", "42"});
  CliRun b = run({"simulate", "--seed", "42"});
  ASSERT_EQ(a.code, kExitOk) << a.err;
  json ja = a.report(), jb = b.report();
  ja["provenance"].erase("timestamp");
  jb["provenance"].erase("timestamp");
  EXPECT_EQ(ja, jb);
  EXPECT_GE(ja["metrics"]["cosine_similarity"].get<double>(), 0.99);
}

TEST_F(CliTest, SimulateGroupedBeatsUngroupedOnHeavyTails) {
  const auto cosine = [](const std::string& groups) {
    const CliRun r = run({"simulate", "--seed", "42", "--bits", "8", "--groups", groups, "--preset",
                       "heavy_tailed"});
    EXPECT_EQ(r.code, kExitOk) << r.err;
    return r.report()["metrics"]["cosine_similarity"].get<double>();
  };
  EXPECT_GE(cosine("8"), cosine("1"));
}

TEST_F(CliTest, SimulateRejectsBadBits) {
  EXPECT_EQ(run({"simulate", "--bits", "5"}).code, kExitUsage);
}
