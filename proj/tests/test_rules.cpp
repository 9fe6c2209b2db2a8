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

#include <filesystem>
#include <random>

#include "alarm/rules.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace alarmlib {
namespace {

Rule rule_of(std::vector<Predicate> preds) {
  Rule r;
  r.predicates = std::move(preds);
  return r;
}

TEST(Matches, IntervalAndEquality) {
  const FeatureSchema schema({{"amount", FeatureKind::kReal, {}},
                              {"k_symbol", FeatureKind::kCategorical, {"UVER", "POJISTNE"}}});
  const Point p{{6000.0, std::string("POJISTNE")}};
  EXPECT_TRUE(matches(rule_of({Predicate::between("amount", 5000, 7000)}), p, schema));
  EXPECT_TRUE(matches(rule_of({Predicate::between("amount", 6000, 6000)}), p, schema));
  EXPECT_TRUE(matches(rule_of({Predicate::between("amount", std::nullopt, 6000)}), p, schema));
  EXPECT_FALSE(matches(rule_of({Predicate::between("amount", 6000.5, std::nullopt)}), p, schema));
  EXPECT_FALSE(matches(rule_of({Predicate::equals("k_symbol", "UVER")}), p, schema));
  EXPECT_THROW(matches(rule_of({Predicate::equals("missing", "UVER")}), p, schema), NotFound);
}

TEST(Matches, ConjunctionOfPredicates) {
  const auto split = testing::separable_split(3);
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const auto r = testing::random_rule(split.schema, rng);
    for (const auto& p : split.inliers) {
      bool all = true;
      for (const auto& pred : r.predicates) all = all && matches(pred, p, split.schema);
      EXPECT_EQ(matches(r, p, split.schema), all);
      EXPECT_EQ(matches(r, p, split.schema), oracle::brute_match(r, p, split.schema));
    }
  }
}

TEST(ScoreRule, DefinitionalExample) {
  const FeatureSchema schema({{"x", FeatureKind::kReal, {}}});
  std::vector<Point> anomalies, inliers;
  for (int i = 0; i < 10; ++i) anomalies.push_back({{i < 7 ? 1.0 : 5.0}});
  for (int i = 0; i < 100; ++i) inliers.push_back({{i < 10 ? 1.0 : 5.0}});
  const auto s = score_rule(rule_of({Predicate::between("x", 0, 2)}), anomalies, inliers, schema);
  EXPECT_EQ(s.coverage, 0.7);
  EXPECT_EQ(s.purity, 0.9);
  EXPECT_EQ(s.matched_anomalies, 7u);
  EXPECT_EQ(s.passing_inliers, 10u);
  const auto everything = score_rule(rule_of({Predicate::between("x", std::nullopt, std::nullopt)}),
                                     anomalies, inliers, schema);
  EXPECT_EQ(everything.coverage, 1.0);
  EXPECT_EQ(everything.purity, 0.0);
  const auto no_inliers = score_rule(rule_of({Predicate::between("x", 0, 2)}), anomalies, {}, schema);
  EXPECT_EQ(no_inliers.purity, 1.0);
  try {
    score_rule(rule_of({Predicate::between("x", 0, 2)}), {}, inliers, schema);
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_STREQ(e.what(), "empty anomaly group");
  }
}

TEST(ScoreRule, MatchesBruteForce) {
  const auto split = testing::separable_split(5);
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const auto r = testing::random_rule(split.schema, rng);
    const auto s = score_rule(r, split.anomalies, split.inliers, split.schema);
    const auto want = oracle::brute_score(r, split.anomalies, split.inliers, split.schema);
    EXPECT_EQ(s.matched_anomalies, want.matched);
    EXPECT_EQ(s.passing_inliers, want.passing);
    EXPECT_EQ(s.coverage, want.coverage);
    EXPECT_EQ(s.purity, want.purity);
  }
}

TEST(ScoreRule, ConjunctionIsAntitone) {
  const auto split = testing::overlapping_split(7);
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    auto r = testing::random_rule(split.schema, rng);
    if (r.predicates.size() < 2) continue;
    auto shorter = r;
    shorter.predicates.pop_back();
    const auto a = score_rule(shorter, split.anomalies, split.inliers, split.schema);
    const auto b = score_rule(r, split.anomalies, split.inliers, split.schema);
    EXPECT_LE(b.matched_anomalies, a.matched_anomalies);
    EXPECT_LE(b.passing_inliers, a.passing_inliers);
    EXPECT_GE(b.purity, a.purity);
  }
}

TEST(Validate, RejectsMalformedRules) {
  const auto schema = testing::rule_schema();
  EXPECT_THROW(rule_of({}).validate(schema), DataError);
  EXPECT_THROW(rule_of({Predicate::between("x", 2, 1)}).validate(schema), DataError);
  EXPECT_THROW(rule_of({Predicate::between("x", 1, 2), Predicate::between("x", 0, 3)}).validate(schema),
               DataError);
  EXPECT_THROW(rule_of({Predicate::equals("k_symbol", "NOPE")}).validate(schema), DataError);
  EXPECT_THROW(rule_of({Predicate::equals("x", "UVER")}).validate(schema), DataError);
  EXPECT_THROW(rule_of({Predicate::between("k_symbol", 0, 1)}).validate(schema), DataError);
  try {
    rule_of({Predicate::between("zz", 0, 1)}).validate(schema);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.field(), "zz");
  }
}

TEST(Json, StrictPredicateParsing) {
  using nlohmann::json;
  const auto r = rule_from_json(json::parse(
      R"({"predicates":[{"feature":"amount","lo":5000,"hi":null},{"feature":"k_symbol","value":"UVER"}]})"));
  ASSERT_EQ(r.predicates.size(), 2u);
  EXPECT_EQ(std::get<Interval>(r.predicates[0].condition), (Interval{5000.0, std::nullopt}));
  EXPECT_EQ(std::get<std::string>(r.predicates[1].condition), "UVER");
  EXPECT_THROW(rule_from_json(json::parse(R"({"predicates":[{"feature":"a","equals":"x"}]})")), DataError);
  EXPECT_THROW(rule_from_json(json::parse(R"({"predicates":[{"feature":"a","value":"x","lo":1}]})")), DataError);
  EXPECT_THROW(rule_from_json(json::parse(R"({"predicates":[{"feature":"a"}]})")), DataError);
  EXPECT_THROW(rule_from_json(json::parse(R"({"rules":[]})")), DataError);
}

TEST(Mining, SeparableFixture) {
  const auto split = testing::separable_split(11);
  const auto rules = mine_candidates(split.anomalies, split.inliers, split.schema, 0.8, 0.8);
  ASSERT_FALSE(rules.empty());
  EXPECT_LE(rules.size(), 3u);
  EXPECT_GE(rules[0].score.coverage, 0.9);
  EXPECT_GE(rules[0].score.purity, 0.85);
  std::set<std::string> leads;
  for (const auto& r : rules) {
    const auto want = oracle::brute_score(r.rule, split.anomalies, split.inliers, split.schema);
    EXPECT_EQ(r.score.coverage, want.coverage);
    EXPECT_EQ(r.score.purity, want.purity);
    EXPECT_GE(r.score.coverage, 0.8);
    EXPECT_GE(r.score.purity, 0.8);
    EXPECT_TRUE(leads.insert(r.rule.predicates.front().feature).second);
    EXPECT_EQ(r.rule.meta.source, RuleSource::kMined);
  }
}

TEST(Mining, NarrowPeakAgainstUniformInliers) {
  const FeatureSchema schema({{"A", FeatureKind::kReal, {}}, {"B", FeatureKind::kReal, {}}});
  Rng rng(12);
  std::uniform_real_distribution<double> peak(0.8, 0.9), unit(0.0, 1.0);
  std::vector<Point> anomalies, inliers;
  for (int i = 0; i < 50; ++i) anomalies.push_back({{peak(rng), unit(rng)}});
  for (int i = 0; i < 500; ++i) inliers.push_back({{unit(rng), unit(rng)}});
  const auto rules = mine_candidates(anomalies, inliers, schema, 0.9, 0.85);
  ASSERT_FALSE(rules.empty());
  const auto& top = rules[0];
  EXPECT_TRUE(std::any_of(top.rule.predicates.begin(), top.rule.predicates.end(),
                          [](const Predicate& p) { return p.feature == "A"; }));
  const auto want = oracle::brute_score(top.rule, anomalies, inliers, schema);
  EXPECT_GE(want.coverage, 0.9);
  EXPECT_GE(want.purity, 0.85);
}

TEST(Mining, PerfectThresholdsOnOverlapGiveNothing) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto split = testing::overlapping_split(seed);
    EXPECT_TRUE(mine_candidates(split.anomalies, split.inliers, split.schema, 1.0, 1.0).empty());
  }
}

TEST(Mining, SingleAnomalyWithoutInliers) {
  const auto schema = testing::rule_schema();
  const std::vector<Point> one{{{3.5, 1.25, std::string("SIPO")}}};
  const auto rules = mine_candidates(one, {}, schema, 1.0, 1.0);
  ASSERT_FALSE(rules.empty());
  EXPECT_EQ(rules[0].score.coverage, 1.0);
  EXPECT_EQ(rules[0].score.purity, 1.0);
  EXPECT_TRUE(matches(rules[0].rule, one[0], schema));
  const auto peaks = peak_predicates(one, schema);
  EXPECT_EQ(peaks.size(), 3u);
}

TEST(Mining, RejectsBadThresholds) {
  const auto split = testing::separable_split(1);
  EXPECT_THROW(mine_candidates(split.anomalies, split.inliers, split.schema, 1.5, 0.5), InvalidArgument);
  EXPECT_THROW(mine_candidates({}, split.inliers, split.schema, 0.5, 0.5), InvalidArgument);
}

TEST(Silverman, KnownValue) {
  const std::vector<double> v{1, 2, 3, 4, 5};
  // sd = sqrt(2.5), IQR = 2 with linear quantiles, so spread = min(1.5811, 1.4925).
  EXPECT_NEAR(silverman_bandwidth(v), 0.9 * (2.0 / 1.34) * std::pow(5.0, -0.2), 1e-12);
}

TEST(RuleDb, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "alarm_rules_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  RuleDB db((dir / "rules.jsonl").string());
  EXPECT_TRUE(db.list().empty());
  const auto schema = testing::rule_schema();
  Rng rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<RuleRecord> saved;
  for (int i = 0; i < 50; ++i) {
    RuleRecord rec{testing::random_rule(schema, rng), {}, "fp" + std::to_string(i)};
    // Awkward doubles must survive the text form exactly.
    if (auto* iv = std::get_if<Interval>(&rec.rule.predicates[0].condition))
      if (iv->lo) iv->lo = *iv->lo / 3.0 + 1e-17;
    rec.rule.meta.author = i % 2 ? std::optional<std::string>("ana \"q\"") : std::nullopt;
    rec.rule.meta.source = i % 3 ? RuleSource::kAnalyst : RuleSource::kMined;
    rec.score = RuleScore{u(rng), u(rng), 3, 7, 2, 9};
    db.save(rec);
    saved.push_back(rec);
    if (i == 0) EXPECT_EQ(db.list().front(), rec);
  }
  EXPECT_EQ(db.list(), saved);
  EXPECT_EQ(RuleDB((dir / "rules.jsonl").string()).list(), saved);
}

}  // namespace
}  // namespace alarmlib
