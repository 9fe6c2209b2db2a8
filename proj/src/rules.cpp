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

#include "alarm/rules.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace alarmlib {
namespace {

const char* source_name(RuleSource s) {
  switch (s) {
    case RuleSource::kMined:
      return "mined";
    case RuleSource::kAnalyst:
      return "analyst";
    default:
      return "";
  }
}

// Indicator of each point matching a predicate.
using Mask = std::vector<std::uint8_t>;

Mask predicate_mask(const Predicate& p, std::span<const Point> points,
                    const FeatureSchema& schema) {
  Mask m(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) m[i] = matches(p, points[i], schema);
  return m;
}

std::size_t count_and(const Mask& a, const Mask& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += a[i] & b[i];
  return n;
}

void and_into(Mask& a, const Mask& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] &= b[i];
}

RuleScore make_score(std::size_t matched, std::size_t anomalies, std::size_t passing,
                     std::size_t inliers) {
  RuleScore s;
  s.matched_anomalies = matched;
  s.anomalies = anomalies;
  s.passing_inliers = passing;
  s.inliers = inliers;
  s.coverage = static_cast<double>(matched) / static_cast<double>(anomalies);
  s.purity = inliers == 0 ? 1.0
                          : 1.0 - static_cast<double>(passing) / static_cast<double>(inliers);
  return s;
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::vector<Interval> kde_peaks(std::vector<double> values, const MiningOptions& options) {
  std::sort(values.begin(), values.end());
  const double lo = values.front();
  const double hi = values.back();
  double h = silverman_bandwidth(values);
  if (!(h > 0.0)) return {Interval{lo, hi}};

  const std::size_t g = std::max<std::size_t>(options.grid_points, 3);
  const double start = lo - 3.0 * h;
  const double step = (hi - lo + 6.0 * h) / static_cast<double>(g - 1);
  std::vector<double> grid(g), density(g, 0.0);
  for (std::size_t i = 0; i < g; ++i) {
    grid[i] = start + step * static_cast<double>(i);
    for (double v : values) {
      const double u = (grid[i] - v) / h;
      density[i] += std::exp(-0.5 * u * u);
    }
  }
  const double cut = options.peak_fraction * *std::max_element(density.begin(), density.end());
  std::vector<Interval> out;
  for (std::size_t i = 0; i < g;) {
    if (density[i] < cut) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < g && density[j + 1] >= cut) ++j;
    const double left = i == 0 ? -INFINITY : 0.5 * (grid[i - 1] + grid[i]);
    const double right = j + 1 == g ? INFINITY : 0.5 * (grid[j] + grid[j + 1]);
    auto first = std::lower_bound(values.begin(), values.end(), left);
    auto last = std::upper_bound(values.begin(), values.end(), right);
    if (first != last) out.push_back(Interval{*first, *(last - 1)});
    i = j + 1;
  }
  return out;
}

}  // namespace

void Rule::validate(const FeatureSchema& schema) const {
  if (predicates.empty()) throw DataError("rule must have at least one predicate", "predicates");
  std::set<std::string> seen;
  for (const auto& p : predicates) {
    const auto j = schema.find(p.feature);
    if (!j) throw DataError("unknown feature in rule: " + p.feature, p.feature);
    if (!seen.insert(p.feature).second)
      throw DataError("rule has two predicates on " + p.feature, p.feature);
    if (p.is_interval()) {
      if (!schema[*j].is_real())
        throw DataError("interval predicate on categorical feature " + p.feature, p.feature);
      const auto& iv = std::get<Interval>(p.condition);
      if ((iv.lo && !std::isfinite(*iv.lo)) || (iv.hi && !std::isfinite(*iv.hi)))
        throw DataError("interval ends must be finite or null", p.feature);
      if (iv.lo && iv.hi && *iv.lo > *iv.hi)
        throw DataError("interval has lo > hi for " + p.feature, p.feature);
    } else {
      if (schema[*j].is_real())
        throw DataError("equality predicate on real feature " + p.feature, p.feature);
      if (!schema.category_index(*j, std::get<std::string>(p.condition)))
        throw DataError("value not declared for " + p.feature, p.feature);
    }
  }
}

bool matches(const Predicate& predicate, const Point& point, const FeatureSchema& schema) {
  const auto j = schema.index_of(predicate.feature);
  if (const auto* iv = std::get_if<Interval>(&predicate.condition)) {
    const auto* v = std::get_if<double>(&point.values.at(j));
    return v != nullptr && iv->contains(*v);
  }
  const auto* v = std::get_if<std::string>(&point.values.at(j));
  return v != nullptr && *v == std::get<std::string>(predicate.condition);
}

bool matches(const Rule& rule, const Point& point, const FeatureSchema& schema) {
  for (const auto& p : rule.predicates)
    if (!matches(p, point, schema)) return false;
  return true;
}

RuleScore score_rule(const Rule& rule, std::span<const Point> anomalies,
                     std::span<const Point> inliers, const FeatureSchema& schema) {
  if (anomalies.empty()) throw InvalidArgument("empty anomaly group");
  rule.validate(schema);
  std::size_t matched = 0, passing = 0;
  for (const auto& p : anomalies) matched += matches(rule, p, schema);
  for (const auto& p : inliers) passing += matches(rule, p, schema);
  return make_score(matched, anomalies.size(), passing, inliers.size());
}

double silverman_bandwidth(std::span<const double> values) {
  const auto n = values.size();
  if (n < 2) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(n - 1));
  std::vector<double> copy(values.begin(), values.end());
  const double iqr = quantile(copy, 0.75) - quantile(copy, 0.25);
  double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

std::vector<Predicate> peak_predicates(std::span<const Point> anomalies,
                                       const FeatureSchema& schema,
                                       const MiningOptions& options) {
  std::vector<Predicate> out;
  if (anomalies.empty()) return out;
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto& f = schema[j];
    if (f.is_real()) {
      std::vector<double> values;
      values.reserve(anomalies.size());
      for (const auto& p : anomalies) values.push_back(p.real(j));
      for (const auto& iv : kde_peaks(std::move(values), options))
        out.push_back(Predicate{f.name, iv});
    } else {
      for (const auto& value : f.values) {
        std::size_t n = 0;
        for (const auto& p : anomalies) n += p.category(j) == value;
        if (n > 0 && static_cast<double>(n) >=
                         options.category_fraction * static_cast<double>(anomalies.size()))
          out.push_back(Predicate::equals(f.name, value));
      }
    }
  }
  return out;
}

std::vector<ScoredRule> mine_candidates(std::span<const Point> anomalies,
                                        std::span<const Point> inliers,
                                        const FeatureSchema& schema, double coverage_min,
                                        double purity_min, const MiningOptions& options) {
  if (anomalies.empty()) throw InvalidArgument("empty anomaly group");
  if (!(coverage_min >= 0.0 && coverage_min <= 1.0))
    throw InvalidArgument("coverage_min must lie in [0, 1]", "coverage_min");
  if (!(purity_min >= 0.0 && purity_min <= 1.0))
    throw InvalidArgument("purity_min must lie in [0, 1]", "purity_min");

  const auto preds = peak_predicates(anomalies, schema, options);
  struct Candidate {
    Mask anomalies, inliers;
  };
  std::vector<Candidate> masks;
  masks.reserve(preds.size());
  for (const auto& p : preds)
    masks.push_back({predicate_mask(p, anomalies, schema), predicate_mask(p, inliers, schema)});

  const Mask all_a(anomalies.size(), 1), all_i(inliers.size(), 1);
  auto score_with = [&](const Mask& ma, const Mask& mi, std::size_t c) {
    return make_score(count_and(ma, masks[c].anomalies), anomalies.size(),
                      count_and(mi, masks[c].inliers), inliers.size());
  };
  // Higher purity, then higher coverage, then feature name.
  auto better = [&](const RuleScore& a, const std::string& fa, const RuleScore& b,
                    const std::string& fb) {
    if (a.purity != b.purity) return a.purity > b.purity;
    if (a.coverage != b.coverage) return a.coverage > b.coverage;
    return fa < fb;
  };

  std::vector<std::size_t> leads;
  std::vector<RuleScore> lead_scores(preds.size());
  for (std::size_t c = 0; c < preds.size(); ++c) {
    lead_scores[c] = score_with(all_a, all_i, c);
    if (lead_scores[c].coverage >= coverage_min) leads.push_back(c);
  }
  std::stable_sort(leads.begin(), leads.end(), [&](std::size_t a, std::size_t b) {
    return better(lead_scores[a], preds[a].feature, lead_scores[b], preds[b].feature);
  });

  std::vector<ScoredRule> out;
  std::set<std::string> used_leads;
  for (auto lead : leads) {
    if (out.size() >= options.max_rules) break;
    if (used_leads.count(preds[lead].feature)) continue;
    Rule rule;
    rule.meta.source = RuleSource::kMined;
    rule.predicates.push_back(preds[lead]);
    std::set<std::string> features{preds[lead].feature};
    Mask ma = masks[lead].anomalies, mi = masks[lead].inliers;
    RuleScore current = lead_scores[lead];
    while (current.purity < purity_min) {
      std::optional<std::size_t> pick;
      RuleScore pick_score;
      for (std::size_t c = 0; c < preds.size(); ++c) {
        if (features.count(preds[c].feature)) continue;
        const auto s = score_with(ma, mi, c);
        if (s.coverage < coverage_min) continue;
        if (!pick || better(s, preds[c].feature, pick_score, preds[*pick].feature)) {
          pick = c;
          pick_score = s;
        }
      }
      if (!pick || !(pick_score.purity > current.purity)) break;
      rule.predicates.push_back(preds[*pick]);
      features.insert(preds[*pick].feature);
      and_into(ma, masks[*pick].anomalies);
      and_into(mi, masks[*pick].inliers);
      current = pick_score;
    }
    if (current.coverage < coverage_min || current.purity < purity_min) continue;
    const bool duplicate = std::any_of(out.begin(), out.end(), [&](const ScoredRule& r) {
      return r.rule.predicates == rule.predicates;
    });
    if (duplicate) continue;
    used_leads.insert(preds[lead].feature);
    out.push_back({std::move(rule), current});
  }
  std::stable_sort(out.begin(), out.end(), [](const ScoredRule& a, const ScoredRule& b) {
    if (a.score.purity != b.score.purity) return a.score.purity > b.score.purity;
    if (a.score.coverage != b.score.coverage) return a.score.coverage > b.score.coverage;
    if (a.rule.predicates.size() != b.rule.predicates.size())
      return a.rule.predicates.size() < b.rule.predicates.size();
    return a.rule.predicates.front().feature < b.rule.predicates.front().feature;
  });
  return out;
}

nlohmann::json rule_to_json(const Rule& rule) {
  nlohmann::json preds = nlohmann::json::array();
  for (const auto& p : rule.predicates) {
    nlohmann::json j{{"feature", p.feature}};
    if (const auto* iv = std::get_if<Interval>(&p.condition)) {
      j["lo"] = iv->lo ? nlohmann::json(*iv->lo) : nlohmann::json(nullptr);
      j["hi"] = iv->hi ? nlohmann::json(*iv->hi) : nlohmann::json(nullptr);
    } else {
      j["value"] = std::get<std::string>(p.condition);
    }
    preds.push_back(std::move(j));
  }
  nlohmann::json meta = nlohmann::json::object();
  if (rule.meta.author) meta["author"] = *rule.meta.author;
  if (rule.meta.created_at) meta["created_at"] = *rule.meta.created_at;
  if (rule.meta.source != RuleSource::kUnspecified) meta["source"] = source_name(rule.meta.source);
  return {{"predicates", std::move(preds)}, {"meta", std::move(meta)}};
}

Rule rule_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("predicates") || !doc["predicates"].is_array())
    throw DataError("rule must be an object with a `predicates` array", "predicates");
  Rule rule;
  for (const auto& p : doc["predicates"]) {
    if (!p.is_object() || !p.contains("feature") || !p["feature"].is_string())
      throw DataError("predicate needs a string `feature`", "feature");
    const auto name = p["feature"].get<std::string>();
    for (const auto& [key, _] : p.items())
      if (key != "feature" && key != "value" && key != "lo" && key != "hi")
        throw DataError("unknown predicate key `" + key + "`", name);
    if (p.contains("value") && (p.contains("lo") || p.contains("hi")))
      throw DataError("predicate mixes `value` with `lo`/`hi`", name);
    if (!p.contains("value") && !p.contains("lo") && !p.contains("hi"))
      throw DataError("predicate needs `value` or `lo`/`hi`", name);
    if (p.contains("value")) {
      if (!p["value"].is_string()) throw DataError("predicate value must be a string", name);
      rule.predicates.push_back(Predicate::equals(name, p["value"].get<std::string>()));
      continue;
    }
    auto bound = [&](const char* key) -> std::optional<double> {
      if (!p.contains(key) || p[key].is_null()) return std::nullopt;
      if (!p[key].is_number()) throw DataError(std::string(key) + " must be a number or null", name);
      return p[key].get<double>();
    };
    rule.predicates.push_back(Predicate::between(name, bound("lo"), bound("hi")));
  }
  if (doc.contains("meta") && doc["meta"].is_object()) {
    const auto& m = doc["meta"];
    if (m.contains("author") && m["author"].is_string()) rule.meta.author = m["author"].get<std::string>();
    if (m.contains("created_at") && m["created_at"].is_string())
      rule.meta.created_at = m["created_at"].get<std::string>();
    const auto src = m.value("source", std::string());
    if (src == "mined") rule.meta.source = RuleSource::kMined;
    if (src == "analyst") rule.meta.source = RuleSource::kAnalyst;
  }
  return rule;
}

nlohmann::json score_to_json(const RuleScore& s) {
  return {{"coverage", s.coverage},
          {"purity", s.purity},
          {"matched_anomalies", s.matched_anomalies},
          {"anomalies", s.anomalies},
          {"passing_inliers", s.passing_inliers},
          {"inliers", s.inliers}};
}

RuleScore score_from_json(const nlohmann::json& doc) {
  RuleScore s;
  s.coverage = doc.at("coverage").get<double>();
  s.purity = doc.at("purity").get<double>();
  s.matched_anomalies = doc.at("matched_anomalies").get<std::size_t>();
  s.anomalies = doc.at("anomalies").get<std::size_t>();
  s.passing_inliers = doc.at("passing_inliers").get<std::size_t>();
  s.inliers = doc.at("inliers").get<std::size_t>();
  return s;
}

RuleDB::RuleDB(std::string path) : path_(std::move(path)) {}

void RuleDB::save(const RuleRecord& record) {
  const nlohmann::json line{{"rule", rule_to_json(record.rule)},
                            {"score", score_to_json(record.score)},
                            {"fingerprint", record.fingerprint}};
  std::lock_guard lock(mutex_);
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw Error("cannot open rule database for writing: " + path_, path_);
  out << line.dump() << '\n';
  out.flush();
  if (!out) throw Error("write to rule database failed: " + path_, path_);
}

std::vector<RuleRecord> RuleDB::list() const {
  std::lock_guard lock(mutex_);
  std::vector<RuleRecord> out;
  std::ifstream in(path_, std::ios::binary);
  if (!in) return out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const auto doc = nlohmann::json::parse(line);
      out.push_back({rule_from_json(doc.at("rule")), score_from_json(doc.at("score")),
                     doc.at("fingerprint").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw DataError("rule database line " + std::to_string(n) + " is malformed: " + e.what());
    }
  }
  return out;
}

}  // namespace alarmlib
