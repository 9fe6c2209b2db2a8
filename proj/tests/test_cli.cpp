/*
 * Copyright 2026 The ALARM Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "alarm/dataio.hpp"
#include "alarm/metrics.hpp"
#include "alarm/rules.hpp"
#include "alarm/xstream.hpp"
#include "support/fixtures.hpp"

namespace alarmlib {
namespace {

namespace fs = std::filesystem;
using testing::separable_split;

struct CliResult {
  int status = 0;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("alarm_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliResult run(const std::string& args) const {
    const auto out = dir_ / "stdout.txt";
    const auto err = dir_ / "stderr.txt";
    const std::string cmd = std::string("'") + ALARM_CLI_PATH + "' " + args + " > '" + out.string() +
                            "' 2> '" + err.string() + "'";
    const int raw = std::system(cmd.c_str());
    CliResult r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Separable fixture as one labelled table.
  DatasetTable labelled(bool with_anomalies) const {
    const auto split = separable_split(4);
    DatasetTable t{split.schema, {}, std::vector<Label>{}};
    for (const auto& p : split.inliers) {
      t.rows.push_back(p);
      t.labels->push_back(Label::kInlier);
    }
    if (with_anomalies)
      for (const auto& p : split.anomalies) {
        t.rows.push_back(p);
        t.labels->push_back(Label::kAnomaly);
      }
    return t;
  }

  fs::path dir_;
};

TEST_F(Cli, SimulateWithoutAnomaliesWritesValidBundle) {
  write_csv(testing::make_reference(300, 2), path("normals.csv"), path("normals.schema.json"));
  const auto r = run("simulate --data " + path("normals.csv") + " --m 40 --k 0 --epochs 5 --seed 1 --out " +
                     path("bundle"));
  ASSERT_EQ(r.status, 0) << r.err;
  const auto report = nlohmann::json::parse(r.out);
  EXPECT_EQ(report["normals"], 40);
  EXPECT_EQ(report["anomalies"], 0);

  const auto table = load_csv(path("bundle.csv"), path("bundle.schema.json"), {.drop_constant_features = false});
  ASSERT_EQ(table.size(), 40u);
  ASSERT_TRUE(table.labels.has_value());
  for (auto l : *table.labels) EXPECT_EQ(l, Label::kInlier);
  EXPECT_EQ(table.schema.size(), testing::reference_schema().size());
  const auto importances = nlohmann::json::parse(slurp(path("bundle.importances.json")));
  ASSERT_TRUE(importances.is_array());
  EXPECT_TRUE(importances.empty());
}

TEST_F(Cli, DetectThenEvalMatchesLibraryAuroc) {
  const auto table = labelled(true);
  write_csv(table, path("data.csv"), path("data.schema.json"));
  auto r = run("detect --data " + path("data.csv") + " --chains 40 --depth 8 --seed 5 --out " + path("scores.csv"));
  ASSERT_EQ(r.status, 0) << r.err;
  r = run("eval --data " + path("data.csv") + " --scores " + path("scores.csv"));
  ASSERT_EQ(r.status, 0) << r.err;
  const double cli = nlohmann::json::parse(r.out)["auroc"].get<double>();

  DetectorParams p;
  p.chains = 40;
  p.depth = 8;
  p.seed = 5;
  const auto loaded = load_csv(path("data.csv"), path("data.schema.json"));
  const auto scores = final_scores(score_batch(loaded, fit(loaded, p)));
  EXPECT_NEAR(cli, auroc(scores, *loaded.labels), 1e-12);
  EXPECT_GT(cli, 0.5);
}

TEST_F(Cli, RuleScoreOnEmptyAnomalyGroupFails) {
  write_csv(labelled(false), path("data.csv"), path("data.schema.json"));
  Rule rule;
  rule.predicates.push_back(Predicate::between("x", 5.0, std::nullopt));
  std::ofstream(path("rule.json")) << rule_to_json(rule).dump();
  const auto r = run("rules score --data " + path("data.csv") + " --rule " + path("rule.json"));
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.err.find("empty anomaly group"), std::string::npos) << r.err;
}

TEST_F(Cli, ErrorsAreJsonLinesOnStderr) {
  const auto r = run("detect --data " + path("missing.csv") + " --out " + path("s.csv"));
  EXPECT_EQ(r.status, 1);
  const auto line = nlohmann::json::parse(r.err.substr(0, r.err.find('\n')));
  EXPECT_TRUE(line.contains("error"));
}

TEST_F(Cli, UnknownSubcommandIsUsageError) {
  const auto r = run("frobnicate");
  EXPECT_NE(r.status, 0);
  EXPECT_FALSE(r.err.empty());
}

}  // namespace
}  // namespace alarmlib
