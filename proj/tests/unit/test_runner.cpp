/*
 * Copyright 2026 The nemgan Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "nemgan/runner.hpp"

namespace fs = std::filesystem;
namespace runner = nemgan::runner;
namespace train = nemgan::train;

namespace {

const char* kSmall = R"(# tiny ring run
mode = V
dataset.kind = ring
dataset.k = 4
dataset.n = 2000
model.g_hidden = 16,16
model.d_hidden = 16,16
model.h1_hidden = 16,16
model.h2_hidden = 8
train.batch = 16
train.steps = 60
train.seed = 7
eval.interval = 20
eval.n = 200
eval.test_per_mode = 20
)";

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class RunnerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("nemgan_runner_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    config_ = dir_ / "small.cfg";
    std::ofstream(config_) << kSmall;
    unsetenv("NEMGAN_SEED");
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path train_run(const std::string& name) {
    std::ostringstream log;
    EXPECT_EQ(runner::cmd_train(config_, dir_ / name, log), 0);
    return dir_ / name;
  }

  fs::path dir_, config_;
};

}  // namespace

TEST(Config, ParsesDottedKeys) {
  const auto cfg = runner::parse_config(kSmall, "small");
  EXPECT_EQ(cfg.dataset.k, 4u);
  EXPECT_EQ(cfg.model.g_hidden, (std::vector<std::size_t>{16, 16}));
  EXPECT_EQ(cfg.train.seed, 7u);
  EXPECT_EQ(cfg.train.variant, train::Variant::kV);
  EXPECT_EQ(cfg.train.labeled_fraction, 0.0);
}

TEST(Config, MissingDatasetSectionNamed) {
  try {
    runner::parse_config("mode = V\ntrain.steps = 10\n", "cfg");
    FAIL() << "expected ConfigError";
  } catch (const runner::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("'dataset'"), std::string::npos) << e.what();
  }
}

TEST(Config, LineAndKeyDiagnostics) {
  try {
    runner::parse_config("dataset.kind = ring\ntrain.stepz = 10\n", "cfg");
    FAIL();
  } catch (const runner::ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("cfg:2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("train.stepz"), std::string::npos) << msg;
  }
  try {
    runner::parse_config("dataset.kind = ring\ntrain.lr_g = fast\n", "cfg");
    FAIL();
  } catch (const runner::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.lr_g"), std::string::npos) << e.what();
  }
  EXPECT_THROW(runner::parse_config("dataset.kind ring\n", "cfg"), runner::ConfigError);
  EXPECT_THROW(runner::parse_config("mode = X\ndataset.k = 3\ntrain.steps = 4\n", "cfg"),
               runner::ConfigError);
}

TEST(Config, VariantVForbidsSupervision) {
  EXPECT_THROW(runner::parse_config(
                   "mode = V\ndataset.kind = ring\ntrain.labeled_fraction = 0.01\n", "cfg"),
               runner::ConfigError);
  const auto p = runner::parse_config("mode = P\ndataset.kind = ring\ntrain.steps = 10\n", "cfg");
  EXPECT_EQ(p.train.labeled_fraction, 0.01);
}

TEST(Config, RenderRoundTrips) {
  const auto cfg = runner::parse_config(kSmall, "small");
  const std::string text = runner::render_config(cfg);
  EXPECT_EQ(runner::render_config(runner::parse_config(text, "rendered")), text);
}

TEST(Config, ContentHashIsGitBlobHash) {
  // git hash-object of "hello\n"
  EXPECT_EQ(runner::content_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
  EXPECT_EQ(runner::content_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST(Config, SeedOverrideFromEnvironment) {
  auto cfg = runner::parse_config(kSmall, "small");
  setenv("NEMGAN_SEED", "99", 1);
  runner::apply_env_overrides(cfg);
  unsetenv("NEMGAN_SEED");
  EXPECT_EQ(cfg.train.seed, 99u);
  setenv("NEMGAN_SEED", "abc", 1);
  EXPECT_THROW(runner::apply_env_overrides(cfg), runner::ConfigError);
  unsetenv("NEMGAN_SEED");
}

TEST_F(RunnerTest, RunDirectoryContents) {
  const fs::path run = train_run("a");
  for (const char* f : {"config.resolved", "metrics.csv", "checkpoint.json", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(run / f)) << f;
  }
  const std::string csv = slurp(run / "metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n') + 1), runner::metrics_csv_header());
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  const std::string manifest = slurp(run / "manifest.json");
  EXPECT_NE(manifest.find(runner::content_hash(slurp(run / "config.resolved"))),
            std::string::npos);
  EXPECT_NE(manifest.find("\"seed\": 7"), std::string::npos) << manifest;
}

TEST_F(RunnerTest, SameSeedByteIdenticalMetrics) {
  const fs::path a = train_run("a");
  const fs::path b = train_run("b");
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  EXPECT_EQ(slurp(a / "checkpoint.json"), slurp(b / "checkpoint.json"));
}

TEST_F(RunnerTest, RerunFromResolvedConfigReproduces) {
  const fs::path a = train_run("a");
  std::ostringstream log;
  ASSERT_EQ(runner::cmd_train(a / "config.resolved", dir_ / "again", log), 0);
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(dir_ / "again" / "metrics.csv"));
}

TEST_F(RunnerTest, CheckpointRoundTrip) {
  const fs::path run = train_run("a");
  const auto cp = runner::load_checkpoint(run / "checkpoint.json");
  EXPECT_EQ(cp.state.step, 60u);
  runner::save_checkpoint(dir_ / "copy.json", cp.config, cp.state);
  EXPECT_EQ(slurp(run / "checkpoint.json"), slurp(dir_ / "copy.json"));
}

TEST_F(RunnerTest, VersionMismatchRejected) {
  const fs::path run = train_run("a");
  std::string text = slurp(run / "checkpoint.json");
  const auto pos = text.find("\"version\": 1");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 12, "\"version\": 2");
  std::ofstream(dir_ / "bad.json") << text;
  EXPECT_THROW(runner::load_checkpoint(dir_ / "bad.json"), runner::CheckpointError);
  std::ofstream(dir_ / "junk.json") << "not json";
  EXPECT_THROW(runner::load_checkpoint(dir_ / "junk.json"), runner::CheckpointError);
}

TEST_F(RunnerTest, EvalValidationAndDeterminism) {
  const fs::path run = train_run("a");
  std::ostringstream out1, out2;
  EXPECT_THROW(runner::cmd_eval(run / "checkpoint.json", 0, 1, out1), std::invalid_argument);
  const auto r1 = runner::cmd_eval(run / "checkpoint.json", 500, 3, out1, dir_ / "eval.csv");
  const auto r2 = runner::cmd_eval(run / "checkpoint.json", 500, 3, out2, dir_ / "eval.csv");
  EXPECT_EQ(out1.str(), out2.str());
  EXPECT_EQ(r1.acc, r2.acc);
  EXPECT_EQ(r1.histogram_kl, r2.histogram_kl);
  const std::string csv = slurp(dir_ / "eval.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST_F(RunnerTest, UntrainedEvalIsNearBaseline) {
  const fs::path run = train_run("a");
  auto cp = runner::load_checkpoint(run / "checkpoint.json");
  cp.state = train::init_state(cp.config.model, cp.config.train,
                               runner::make_mixture(cp.config.dataset));
  runner::save_checkpoint(dir_ / "untrained.json", cp.config, cp.state);
  std::ostringstream out;
  const auto r = runner::cmd_eval(dir_ / "untrained.json", 2000, 1, out);
  EXPECT_LE(r.modes_covered, 4u);
  EXPECT_LT(r.acc, 0.9);
}

TEST_F(RunnerTest, SampleCountsAndSvg) {
  const fs::path run = train_run("a");
  auto one = runner::cmd_sample(run / "checkpoint.json", 1, std::nullopt, 1, dir_ / "one.csv");
  EXPECT_EQ(one.labels.size(), 1u);
  const std::string csv = slurp(dir_ / "one.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);

  auto many = runner::cmd_sample(run / "checkpoint.json", 37, std::size_t{2}, 1,
                                 dir_ / "many.csv", dir_ / "many.svg");
  for (std::size_t l : many.labels) EXPECT_EQ(l, 2u);
  const std::string svg = slurp(dir_ / "many.svg");
  std::size_t circles = 0;
  for (std::size_t p = svg.find("<circle"); p != std::string::npos; p = svg.find("<circle", p + 1)) {
    ++circles;
  }
  EXPECT_EQ(circles, 37u);
  EXPECT_EQ(svg.rfind("<svg", 200) != std::string::npos, true);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);

  EXPECT_THROW(runner::cmd_sample(run / "checkpoint.json", 5, std::size_t{4}, 1, dir_ / "x.csv"),
               std::out_of_range);
}

TEST(Gradcheck, AllTermsPassAndAlphaPathIncluded) {
  auto cfg = runner::parse_config("dataset.kind = ring\ntrain.steps = 10\n", "cfg");
  const auto report = runner::run_gradcheck(cfg);
  bool has_alpha = false;
  for (const auto& t : report.terms) {
    EXPECT_LT(t.result.max_relative_error, 1e-4) << t.name;
    has_alpha = has_alpha || t.name == "alpha_soft_indicator";
  }
  EXPECT_TRUE(has_alpha);
  EXPECT_TRUE(report.passed());
}
