// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "sparx/ndtensor/tensor_io.hpp"
#include "sparx_tools/cli.hpp"
#include "test_util.hpp"

namespace sparx::tools {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("sparx_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  int run(const std::string& out, std::vector<std::string> args) {
    args.insert(args.begin(), {"--out", (root_ / out).string()});
    std::ostringstream o, e;
    int code = run_cli(args, o, e);
    stdout_ = o.str();
    stderr_ = e.str();
    return code;
  }

  std::string read(const std::string& rel) const {
    std::ifstream f(root_ / rel, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
  }

  json manifest(const std::string& out) const { return json::parse(read(out + "/manifest.json")); }

  fs::path root_;
  std::string stdout_, stderr_;
};

TEST_F(Cli, PlanWorkedExample) {
  ASSERT_EQ(run("p", {"plan", "--layers", "8", "--stride", "2", "--window", "2"}), kExitOk) << stderr_;
  std::string dot = read("p/plan.dot");
  std::set<int> ganglia;
  std::regex dc(R"((\d+) \[[^\]]*doublecircle)");
  for (auto it = std::sregex_iterator(dot.begin(), dot.end(), dc); it != std::sregex_iterator(); ++it)
    ganglia.insert(std::stoi((*it)[1]));
  EXPECT_EQ(ganglia, (std::set<int>{2, 4, 6, 8}));
  auto plan = json::parse(read("p/plan.json"));
  EXPECT_TRUE(plan.is_object());
}

TEST_F(Cli, PlanVariantHasFourStages) {
  ASSERT_EQ(run("p", {"plan", "--variant", "tiny"}), kExitOk) << stderr_;
  auto plans = json::parse(read("p/plan.json"));
  ASSERT_TRUE(plans.is_array());
  ASSERT_EQ(plans.size(), 4u);
  EXPECT_EQ(read("p/stage1.dot").find("doublecircle"), std::string::npos);
  EXPECT_NE(read("p/stage3.dot").find("doublecircle"), std::string::npos);
}

TEST_F(Cli, PlanPlainCrossStageIsConfigError) {
  EXPECT_EQ(run("p", {"plan", "--layers", "4", "--mode", "plain", "--cross-stage"}), kExitConfig);
  EXPECT_FALSE(stderr_.empty());
}

TEST_F(Cli, PlanBadOverrideNamesStage) {
  EXPECT_EQ(run("p", {"plan", "--layers", "4", "--ganglia", "2,9"}), kExitConfig);
  EXPECT_FALSE(stderr_.empty());
}

TEST_F(Cli, UnknownInputsAreConfigErrors) {
  EXPECT_EQ(run("x", {"frobnicate"}), kExitConfig);
  EXPECT_EQ(run("x", {"plan", "--bogus"}), kExitConfig);
  EXPECT_EQ(run("x", {"stats", "--variant", "huge"}), kExitConfig);
  EXPECT_EQ(run("x", {"forward", "--input", "48"}), kExitConfig);
  EXPECT_EQ(run("x", {"erf", "--stage", "7"}), kExitConfig);
  EXPECT_EQ(run("x", {"capture", "--what", "everything"}), kExitConfig);
}

TEST_F(Cli, ConfigFileIsHonoredAndValidated) {
  {
    std::ofstream(root_ / "good.json") << R"({"variant": "tiny-reduced", "mixer_kind": "ssm"})";
    std::ofstream(root_ / "bad.json") << R"({"variant": "tiny-reduced", "colour": 3})";
  }
  EXPECT_EQ(run("a", {"forward", "--config", (root_ / "good.json").string()}), kExitOk) << stderr_;
  EXPECT_EQ(run("b", {"forward", "--config", (root_ / "bad.json").string()}), kExitConfig);
}

TEST_F(Cli, StatsTinyAccountingAndOrdering) {
  ASSERT_EQ(run("s", {"stats", "--variant", "tiny", "--input", "224", "--modes", "sparx,dgc,dsn"}), kExitOk)
      << stderr_;
  std::istringstream csv(read("s/stats.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "variant,mode,input,params,macs,inference_peak_bytes,training_bytes");
  std::vector<double> params, training;
  while (std::getline(csv, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    ASSERT_EQ(f.size(), 7u);
    params.push_back(std::stod(f[3]));
    training.push_back(std::stod(f[6]));
  }
  ASSERT_EQ(params.size(), 3u);
  EXPECT_LE(std::abs(params[0] / 1e6 - 27.1) / 27.1, 0.10);
  EXPECT_LT(training[0], training[1]);
  EXPECT_LT(training[1], training[2]);
  std::string first = read("s/stats.csv");
  ASSERT_EQ(run("s2", {"stats", "--variant", "tiny", "--input", "224", "--modes", "sparx,dgc,dsn"}), kExitOk);
  EXPECT_EQ(read("s2/stats.csv"), first);
}

TEST_F(Cli, VerifyPassesAndSabotageFails) {
  ASSERT_EQ(run("v", {"verify"}), kExitOk) << stdout_ << stderr_;
  auto report = json::parse(read("v/verify.json"));
  EXPECT_GE(report["checks"].size(), 20u);
  EXPECT_EQ(report["failed"], 0);
  for (const auto& c : report["checks"]) {
    EXPECT_TRUE(c.contains("name"));
    EXPECT_TRUE(c.contains("measured"));
    EXPECT_TRUE(c.contains("tolerance"));
  }
  ASSERT_EQ(run("w", {"verify", "--sabotage", "softmax"}), kExitRuntime);
  auto bad = json::parse(read("w/verify.json"));
  EXPECT_EQ(bad["checks"].size(), report["checks"].size());
  EXPECT_GE(bad["failed"].get<int>(), 1);
  EXPECT_EQ(run("z", {"verify", "--sabotage", "gravity"}), kExitConfig);
}

TEST_F(Cli, ForwardIsByteIdentical) {
  ASSERT_EQ(run("f1", {"forward", "--variant", "tiny-reduced", "--seed", "0"}), kExitOk) << stderr_;
  ASSERT_EQ(run("f2", {"forward", "--variant", "tiny-reduced", "--seed", "0"}), kExitOk);
  EXPECT_EQ(read("f1/logits.spxt"), read("f2/logits.spxt"));
  EXPECT_EQ(decode_tensor(read("f1/logits.spxt")).shape(), (Shape{2}));
  ASSERT_EQ(run("f3", {"forward", "--variant", "tiny-reduced", "--seed", "1"}), kExitOk);
  EXPECT_NE(read("f1/logits.spxt"), read("f3/logits.spxt"));
}

TEST_F(Cli, ForwardReadsImageFile) {
  Tensor img = testing::randn({3, 32, 32}, 5);
  { std::ofstream(root_ / "img.spxt", std::ios::binary) << encode_tensor(img); }
  ASSERT_EQ(run("f", {"forward", "--image", (root_ / "img.spxt").string()}), kExitOk) << stderr_;
  { std::ofstream(root_ / "junk.spxt", std::ios::binary) << "junk"; }
  EXPECT_NE(run("g", {"forward", "--image", (root_ / "junk.spxt").string()}), kExitOk);
}

TEST_F(Cli, ManifestSchema) {
  ASSERT_EQ(run("m", {"forward", "--seed", "3"}), kExitOk);
  auto m = manifest("m");
  for (const char* k : {"command", "args", "seed", "version", "artifacts", "created_at"}) EXPECT_TRUE(m.contains(k)) << k;
  EXPECT_EQ(m["command"], "forward");
  EXPECT_EQ(m["seed"], 3);
  std::string logits = read("m/logits.spxt");
  EXPECT_EQ(m["artifacts"]["logits.spxt"]["bytes"], logits.size());
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(logits)));
  EXPECT_EQ(m["artifacts"]["logits.spxt"]["fnv1a64"], hex);
}

TEST_F(Cli, ManifestsDifferOnlyInTimestamp) {
  ASSERT_EQ(run("a", {"plan", "--variant", "small"}), kExitOk);
  ASSERT_EQ(run("b", {"plan", "--variant", "small"}), kExitOk);
  auto a = manifest("a"), b = manifest("b");
  for (auto* m : {&a, &b}) {
    m->erase("created_at");
    m->erase("args");
  }
  EXPECT_EQ(a, b);
}

TEST_F(Cli, CaptureIsDeterministicAndListed) {
  ASSERT_EQ(run("c1", {"capture", "--samples", "2", "--what", "both"}), kExitOk) << stderr_;
  ASSERT_EQ(run("c2", {"capture", "--samples", "2", "--what", "both"}), kExitOk);
  auto m = manifest("c1");
  ASSERT_EQ(m["layers"].size(), 12u);
  for (const auto& e : m["layers"]) {
    std::string file = e["file"];
    EXPECT_EQ(read("c1/" + file), read("c2/" + file)) << file;
    Tensor t = decode_tensor(read("c1/" + file));
    EXPECT_EQ(t.dim(0), 2u);
    EXPECT_EQ(t.shape().size(), 4u);
  }
}

TEST_F(Cli, CkaOfIdenticalDumpIsOnes) {
  fs::create_directories(root_ / "dump");
  Tensor t = testing::randn({6, 4, 2, 2}, 7);
  std::string bytes = encode_tensor(t);
  std::ofstream(root_ / "dump" / "a.spxt", std::ios::binary) << bytes;
  std::ofstream(root_ / "dump" / "b.spxt", std::ios::binary) << bytes;
  ASSERT_EQ(run("k", {"cka", "--dump-dir", (root_ / "dump").string()}), kExitOk) << stderr_;
  Tensor m = decode_tensor(read("k/cka.spxt"));
  ASSERT_EQ(m.shape(), (Shape{2, 2}));
  for (double v : m.data()) EXPECT_NEAR(v, 1.0, 1e-6);
  EXPECT_EQ(read("k/cka.csv").rfind("layer,", 0), 0u);
}

TEST_F(Cli, CkaReadsCaptureRun) {
  ASSERT_EQ(run("c", {"capture", "--samples", "4"}), kExitOk) << stderr_;
  ASSERT_EQ(run("k", {"cka", "--dump-dir", (root_ / "c").string()}), kExitOk) << stderr_;
  Tensor m = decode_tensor(read("k/cka.spxt"));
  EXPECT_EQ(m.shape(), (Shape{6, 6}));
  EXPECT_EQ(run("e", {"cka", "--dump-dir", (root_ / "missing").string()}), kExitConfig);
}

TEST_F(Cli, ErfWritesMapAndPgm) {
  ASSERT_EQ(run("e", {"erf", "--stage", "2", "--images", "1"}), kExitOk) << stderr_;
  Tensor m = decode_tensor(read("e/erf.spxt"));
  EXPECT_EQ(m.shape(), (Shape{32, 32}));
  EXPECT_EQ(read("e/erf.pgm").rfind("P5\n32 32\n255\n", 0), 0u);
}

TEST_F(Cli, TrainToyReachesTarget) {
  ASSERT_EQ(run("t", {"train-toy", "--steps", "500", "--seed", "0"}), kExitOk) << stderr_;
  auto r = json::parse(read("t/train.json"));
  EXPECT_GE(r["final_accuracy"].get<double>(), 0.95);
  std::string losses = read("t/losses.csv");
  ASSERT_EQ(run("t2", {"train-toy", "--steps", "20", "--seed", "0"}), kExitOk);
  EXPECT_EQ(read("t2/losses.csv"), losses.substr(0, read("t2/losses.csv").size()));
}

TEST_F(Cli, BenchWritesTimings) {
  ASSERT_EQ(run("b", {"bench", "--reps", "1"}), kExitOk) << stderr_;
  EXPECT_TRUE(json::parse(read("b/bench.json")).is_object());
}

TEST_F(Cli, OutputDirFromEnvironment) {
  fs::path env_dir = root_ / "from_env";
  ::setenv("SPARX_OUT", env_dir.c_str(), 1);
  std::ostringstream o, e;
  int code = run_cli({"plan", "--layers", "3"}, o, e);
  ::unsetenv("SPARX_OUT");
  ASSERT_EQ(code, kExitOk) << e.str();
  EXPECT_TRUE(fs::exists(env_dir / "plan.json"));
  EXPECT_TRUE(fs::exists(env_dir / "manifest.json"));
}

TEST_F(Cli, BinaryExitCodes) {
  auto status = [&](const std::string& args) {
    std::string cmd = std::string(SPARX_BIN) + " --out " + (root_ / "bin").string() + " " + args + " >/dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  };
  EXPECT_EQ(status("plan --layers 8 --stride 2 --window 2"), 0);
  EXPECT_EQ(status("plan --mode plain --cross-stage"), 2);
  EXPECT_EQ(status("verify --sabotage softmax"), 1);
  EXPECT_EQ(status("--help"), 0);
}

}  // namespace
}  // namespace sparx::tools
