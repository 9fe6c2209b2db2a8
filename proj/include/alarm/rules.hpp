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

#pragma once

#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "alarm/dataio.hpp"
#include "json.hpp"

namespace alarmlib {

// Closed interval; a missing end is unbounded.
struct Interval {
  std::optional<double> lo;
  std::optional<double> hi;

  bool contains(double v) const { return (!lo || v >= *lo) && (!hi || v <= *hi); }
  bool operator==(const Interval&) const = default;
};

struct Predicate {
  std::string feature;
  std::variant<Interval, std::string> condition;

  static Predicate between(std::string feature, std::optional<double> lo,
                           std::optional<double> hi) {
    return {std::move(feature), Interval{lo, hi}};
  }
  static Predicate equals(std::string feature, std::string value) {
    return {std::move(feature), std::move(value)};
  }
  bool is_interval() const { return std::holds_alternative<Interval>(condition); }
  bool operator==(const Predicate&) const = default;
};

enum class RuleSource { kUnspecified, kMined, kAnalyst };

struct RuleMeta {
  std::optional<std::string> author;
  std::optional<std::string> created_at;
  RuleSource source = RuleSource::kUnspecified;
  bool operator==(const RuleMeta&) const = default;
};

// Conjunction of predicates, at most one per feature.
struct Rule {
  std::vector<Predicate> predicates;
  RuleMeta meta;

  // Throws DataError naming the offending feature.
  void validate(const FeatureSchema& schema) const;
  bool operator==(const Rule&) const = default;
};

struct RuleScore {
  double coverage = 0.0;  // matched anomalies / anomalies
  double purity = 1.0;    // 1 - passing inliers / inliers (1 with no inliers)
  std::size_t matched_anomalies = 0;
  std::size_t anomalies = 0;
  std::size_t passing_inliers = 0;
  std::size_t inliers = 0;
  bool operator==(const RuleScore&) const = default;
};

// Evaluated on raw (unnormalized) values.
bool matches(const Rule& rule, const Point& point, const FeatureSchema& schema);
bool matches(const Predicate& predicate, const Point& point, const FeatureSchema& schema);

RuleScore score_rule(const Rule& rule, std::span<const Point> anomalies,
                     std::span<const Point> inliers, const FeatureSchema& schema);

struct MiningOptions {
  double peak_fraction = 0.2;      // keep KDE >= this fraction of its max
  double category_fraction = 0.3;  // keep categories at least this frequent
  std::size_t max_rules = 3;
  std::size_t grid_points = 512;
};

struct ScoredRule {
  Rule rule;
  RuleScore score;
};

// Silverman's rule of thumb, 0.9 min(sd, IQR / 1.34) n^(-1/5).
double silverman_bandwidth(std::span<const double> values);

// Peak intervals of the anomalies' per-feature KDE and frequent category
// values; interval ends are snapped to the anomaly values inside each peak.
std::vector<Predicate> peak_predicates(std::span<const Point> anomalies,
                                       const FeatureSchema& schema,
                                       const MiningOptions& options = {});

// Up to max_rules rules meeting both thresholds, each with a distinct leading
// feature. Empty when nothing qualifies.
std::vector<ScoredRule> mine_candidates(std::span<const Point> anomalies,
                                        std::span<const Point> inliers,
                                        const FeatureSchema& schema, double coverage_min,
                                        double purity_min, const MiningOptions& options = {});

nlohmann::json rule_to_json(const Rule& rule);
// Structural parse only; call Rule::validate for schema checks.
Rule rule_from_json(const nlohmann::json& doc);
nlohmann::json score_to_json(const RuleScore& score);
RuleScore score_from_json(const nlohmann::json& doc);

struct RuleRecord {
  Rule rule;
  RuleScore score;
  std::string fingerprint;
  bool operator==(const RuleRecord&) const = default;
};

// Append-only JSON-lines rule store. Writes are serialized.
class RuleDB {
 public:
  explicit RuleDB(std::string path);

  void save(const RuleRecord& record);
  std::vector<RuleRecord> list() const;
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  mutable std::mutex mutex_;
};

}  // namespace alarmlib
