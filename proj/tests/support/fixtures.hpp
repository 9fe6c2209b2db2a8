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

// Synthetic datasets shared by the unit tests and the acceptance suite.

#pragma once

#include <algorithm>
#include <array>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "alarm/dataio.hpp"
#include "alarm/rules.hpp"

namespace alarmlib::testing {

// Six correlated real features and three categoricals driven by three
// latent clusters.
inline FeatureSchema reference_schema() {
  return FeatureSchema({
      {"latency", FeatureKind::kReal, {}},
      {"throughput", FeatureKind::kReal, {}},
      {"cpu", FeatureKind::kReal, {}},
      {"memory", FeatureKind::kReal, {}},
      {"io_wait", FeatureKind::kReal, {}},
      {"queue_depth", FeatureKind::kReal, {}},
      {"region", FeatureKind::kCategorical, {"east", "west", "north", "south"}},
      {"protocol", FeatureKind::kCategorical, {"tcp", "udp", "quic"}},
      {"tier", FeatureKind::kCategorical, {"gold", "silver", "bronze"}},
  });
}

inline DatasetTable make_reference(std::size_t n, std::uint64_t seed) {
  static constexpr std::array<std::array<double, 6>, 3> kMeans = {{
      {1.0, 8.0, 2.0, 4.0, 0.5, 3.0},
      {4.0, 3.0, 6.0, 2.0, 2.0, 1.0},
      {7.0, 5.0, 3.5, 7.0, 1.0, 6.0},
  }};
  static constexpr std::array<double, 6> kLoad = {0.6, -0.5, 0.4, 0.3, 0.2, 0.5};
  // Each categorical has one value that is rare in every cluster.
  static constexpr std::array<std::array<double, 4>, 3> kRegion = {{
      {0.75, 0.2, 0.04, 0.01}, {0.15, 0.6, 0.23, 0.02}, {0.05, 0.25, 0.67, 0.03}}};
  static constexpr std::array<std::array<double, 3>, 3> kProtocol = {{
      {0.8, 0.18, 0.02}, {0.25, 0.72, 0.03}, {0.5, 0.48, 0.02}}};
  static constexpr std::array<std::array<double, 3>, 3> kTier = {{
      {0.8, 0.18, 0.02}, {0.3, 0.68, 0.02}, {0.5, 0.47, 0.03}}};

  std::mt19937_64 rng(seed);
  std::discrete_distribution<int> cluster({0.5, 0.3, 0.2});
  std::normal_distribution<double> n01;
  const auto schema = reference_schema();
  DatasetTable t{schema, {}, std::nullopt};
  for (std::size_t i = 0; i < n; ++i) {
    const int c = cluster(rng);
    const double shared = n01(rng);
    Point p;
    for (std::size_t j = 0; j < 6; ++j)
      p.values.emplace_back(kMeans[c][j] + kLoad[j] * shared + 0.3 * n01(rng));
    std::discrete_distribution<int> region(kRegion[c].begin(), kRegion[c].end());
    std::discrete_distribution<int> protocol(kProtocol[c].begin(), kProtocol[c].end());
    p.values.emplace_back(schema[6].values[region(rng)]);
    p.values.emplace_back(schema[7].values[protocol(rng)]);
    std::discrete_distribution<int> tier(kTier[c].begin(), kTier[c].end());
    p.values.emplace_back(schema[8].values[tier(rng)]);
    t.rows.push_back(std::move(p));
  }
  return t;
}

// Two real features and one categorical. Anomalies sit at x in [6, 7] with
// symbol UVER; inliers at x in [0, 4] with mixed symbols.
struct LabelledSplit {
  FeatureSchema schema;
  std::vector<Point> anomalies;
  std::vector<Point> inliers;
};

inline FeatureSchema rule_schema() {
  return FeatureSchema({{"x", FeatureKind::kReal, {}},
                        {"y", FeatureKind::kReal, {}},
                        {"k_symbol", FeatureKind::kCategorical, {"UVER", "SIPO", "PREV"}}});
}

inline LabelledSplit separable_split(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> anomaly_x(6.0, 7.0), inlier_x(0.0, 4.0), y(0.0, 10.0);
  LabelledSplit s{rule_schema(), {}, {}};
  const auto& symbols = s.schema[2].values;
  std::uniform_int_distribution<std::size_t> pick(0, symbols.size() - 1);
  for (int i = 0; i < 60; ++i)
    s.anomalies.push_back({{anomaly_x(rng), y(rng), std::string("UVER")}});
  for (int i = 0; i < 240; ++i)
    s.inliers.push_back({{inlier_x(rng), y(rng), symbols[pick(rng)]}});
  return s;
}

// Anomalies and inliers drawn from one distribution.
inline LabelledSplit overlapping_split(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  LabelledSplit s{rule_schema(), {}, {}};
  const auto& symbols = s.schema[2].values;
  std::uniform_int_distribution<std::size_t> pick(0, symbols.size() - 1);
  auto draw = [&] { return Point{{n01(rng), n01(rng), symbols[pick(rng)]}}; };
  for (int i = 0; i < 60; ++i) s.anomalies.push_back(draw());
  for (int i = 0; i < 240; ++i) s.inliers.push_back(draw());
  return s;
}

// Random conjunctions over distinct features; intervals may be half-open.
inline Predicate random_predicate(const FeatureSchema& schema, std::size_t j, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 8.0);
  std::bernoulli_distribution open(0.2);
  if (schema[j].is_real()) {
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    return Predicate::between(schema[j].name, open(rng) ? std::nullopt : std::optional(a),
                              open(rng) ? std::nullopt : std::optional(b));
  }
  std::uniform_int_distribution<std::size_t> pick(0, schema[j].values.size() - 1);
  return Predicate::equals(schema[j].name, schema[j].values[pick(rng)]);
}

inline Rule random_rule(const FeatureSchema& schema, Rng& rng) {
  std::vector<std::size_t> feats(schema.size());
  std::iota(feats.begin(), feats.end(), 0);
  std::shuffle(feats.begin(), feats.end(), rng);
  std::uniform_int_distribution<std::size_t> size(1, schema.size());
  Rule r;
  const auto n = size(rng);
  for (std::size_t i = 0; i < n; ++i) r.predicates.push_back(random_predicate(schema, feats[i], rng));
  return r;
}

}  // namespace alarmlib::testing
