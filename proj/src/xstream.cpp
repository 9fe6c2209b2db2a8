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

#include "alarm/xstream.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace alarmlib {
namespace {

constexpr std::uint32_t kRootBin = 0;

const char* counter_name(CounterMode m) {
  return m == CounterMode::kExact ? "exact" : "countmin";
}

}  // namespace

nlohmann::json params_to_json(const DetectorParams& p) {
  return {{"chains", p.chains},
          {"depth", p.depth},
          {"projection_dims", p.projection_dims},
          {"counter", counter_name(p.counter)},
          {"cms_rows", p.cms_rows},
          {"cms_cols", p.cms_cols},
          {"seed", p.seed}};
}

DetectorParams params_from_json(const nlohmann::json& doc) {
  DetectorParams p;
  if (!doc.is_object()) throw InvalidArgument("detector params must be an object");
  auto read_size = [&](const char* key, std::size_t& out) {
    if (!doc.contains(key)) return;
    const auto& v = doc[key];
    if (!v.is_number_integer() || v.get<long long>() < 0)
      throw InvalidArgument(std::string(key) + " must be a non-negative integer", key);
    out = v.get<std::size_t>();
  };
  read_size("chains", p.chains);
  read_size("depth", p.depth);
  read_size("projection_dims", p.projection_dims);
  read_size("cms_rows", p.cms_rows);
  read_size("cms_cols", p.cms_cols);
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_integer())
      throw InvalidArgument("seed must be an integer", "seed");
    p.seed = doc["seed"].get<std::uint64_t>();
  }
  if (doc.contains("counter")) {
    const auto c = doc["counter"].get<std::string>();
    if (c == "exact") {
      p.counter = CounterMode::kExact;
    } else if (c == "countmin") {
      p.counter = CounterMode::kCountMin;
    } else {
      throw InvalidArgument("counter must be `exact` or `countmin`", "counter");
    }
  }
  return p;
}

std::optional<std::uint32_t> ExactCounter::find(const BinKey& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t ExactCounter::insert(const BinKey& key, std::uint64_t times) {
  auto [it, inserted] = index_.try_emplace(key, static_cast<std::uint32_t>(counts_.size()));
  if (inserted) {
    keys_.push_back(key);
    counts_.push_back(0);
  }
  counts_[it->second] += times;
  return it->second;
}

std::uint64_t ExactCounter::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

nlohmann::json ExactCounter::to_json() const {
  nlohmann::json bins = nlohmann::json::array();
  for (std::size_t i = 0; i < counts_.size(); ++i)
    bins.push_back({keys_[i].parent, keys_[i].cell, counts_[i]});
  return bins;
}

ExactCounter ExactCounter::from_json(const nlohmann::json& doc) {
  ExactCounter c;
  for (const auto& b : doc) {
    BinKey key{b.at(0).get<std::uint32_t>(), b.at(1).get<std::int64_t>()};
    const auto n = b.at(2).get<std::uint64_t>();
    if (c.find(key)) throw DataError("duplicate bin in serialized counter");
    c.insert(key, n);
  }
  return c;
}

std::uint64_t bin_digest(std::span<const std::int64_t> bin_id) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (std::size_t i = 0; i < bin_id.size(); ++i) {
    if (bin_id[i] == 0) continue;
    h = mix64(h ^ mix64(static_cast<std::uint64_t>(i) + 1));
    h = mix64(h ^ static_cast<std::uint64_t>(bin_id[i]));
  }
  return h;
}

std::uint64_t cms_count(const CountMinSketch& counter,
                        std::span<const std::int64_t> bin_id) {
  return counter.count(bin_digest(bin_id));
}

std::int64_t floor_to_cell(double z) {
  constexpr double kMax = 9.0e18;
  const double f = std::floor(z);
  if (!(f < kMax)) return f > 0 || std::isnan(f) ? static_cast<std::int64_t>(kMax)
                                                 : static_cast<std::int64_t>(-kMax);
  if (f < -kMax) return static_cast<std::int64_t>(-kMax);
  return static_cast<std::int64_t>(f);
}

std::vector<std::int64_t> level_cells(const Eigen::Ref<const Vector>& sketch,
                                      std::span<const std::size_t> features,
                                      const Eigen::Ref<const Vector>& delta) {
  std::vector<std::int64_t> cells(features.size());
  // Current unfloored z per dimension; NaN marks "not yet sampled".
  std::vector<double> z(static_cast<std::size_t>(sketch.size()),
                        std::numeric_limits<double>::quiet_NaN());
  for (std::size_t l = 0; l < features.size(); ++l) {
    const auto f = features[l];
    const auto fi = static_cast<Eigen::Index>(f);
    z[f] = std::isnan(z[f]) ? sketch[fi] / delta[fi] : 2.0 * z[f];
    cells[l] = floor_to_cell(z[f]);
  }
  return cells;
}

std::vector<std::vector<std::int64_t>> bin_id_path(
    const Eigen::Ref<const Vector>& sketch, const HalfSpaceChain& chain,
    const Eigen::Ref<const Vector>& delta) {
  const auto cells = level_cells(sketch, chain.features, delta);
  std::vector<std::vector<std::int64_t>> path;
  path.reserve(cells.size());
  std::vector<std::int64_t> current(static_cast<std::size_t>(sketch.size()), 0);
  for (std::size_t l = 0; l < cells.size(); ++l) {
    current[chain.features[l]] = cells[l];
    path.push_back(current);
  }
  return path;
}

ChainEnsemble ChainEnsemble::fit(const DatasetTable& data, const DetectorParams& params) {
  if (data.empty()) throw InvalidArgument("cannot fit the detector on an empty dataset");
  if (params.chains < 1) throw InvalidArgument("number of chains must be >= 1", "chains");
  if (params.depth < 1) throw InvalidArgument("chain depth must be >= 1", "depth");
  if (params.counter == CounterMode::kCountMin &&
      (params.cms_rows < 1 || params.cms_cols < 1))
    throw InvalidArgument("count-min sketch needs rows and cols >= 1", "cms_cols");

  ChainEnsemble e;
  e.params_ = params;
  e.schema_ = data.schema;
  e.normalizer_ = fit_normalizer(data);
  e.layout_ = OneHotLayout(data.schema);
  e.hashes_ = HashFamily(params.projection_dims, mix64(params.seed ^ 0x7a11ULL));
  e.fit_size_ = data.size();

  const std::size_t dims = params.projected() ? params.projection_dims : e.layout_.width();
  if (dims == 0) throw InvalidArgument("dataset has no features");
  Matrix sketches(static_cast<Eigen::Index>(dims), static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i)
    sketches.col(static_cast<Eigen::Index>(i)) = e.sketch(data.rows[i]);

  const Vector lo = sketches.rowwise().minCoeff();
  const Vector hi = sketches.rowwise().maxCoeff();
  e.delta_ = ((hi - lo) / 2.0).unaryExpr([](double d) { return d > 0.0 ? d : kMinBinWidth; });

  Rng rng(params.seed);
  std::uniform_int_distribution<std::size_t> pick(0, dims - 1);
  e.chains_.resize(params.chains);
  for (std::size_t m = 0; m < params.chains; ++m) {
    auto& chain = e.chains_[m];
    chain.features.resize(params.depth);
    for (auto& f : chain.features) f = pick(rng);
    if (params.counter == CounterMode::kExact) {
      chain.exact.resize(params.depth);
    } else {
      for (std::size_t l = 0; l < params.depth; ++l)
        chain.countmin.emplace_back(params.cms_rows, params.cms_cols,
                                    mix64(params.seed + 0x1000ULL * (m + 1) + l));
    }
  }
  for (Eigen::Index i = 0; i < sketches.cols(); ++i) e.insert_sketch(sketches.col(i), 1);
  return e;
}

Vector ChainEnsemble::sketch(const Point& raw) const {
  const Point x = normalize(raw, normalizer_);
  if (params_.projected()) return project(x, hashes_, schema_);
  return layout_.encode(x);
}

void ChainEnsemble::insert_sketch(const Eigen::Ref<const Vector>& s, std::uint64_t times) {
  std::vector<std::int64_t> full(dims(), 0);
  for (auto& chain : chains_) {
    const auto cells = level_cells(s, chain.features, delta_);
    if (params_.counter == CounterMode::kExact) {
      std::uint32_t parent = kRootBin;
      for (std::size_t l = 0; l < cells.size(); ++l)
        parent = chain.exact[l].insert({parent, cells[l]}, times);
    } else {
      std::fill(full.begin(), full.end(), 0);
      for (std::size_t l = 0; l < cells.size(); ++l) {
        full[chain.features[l]] = cells[l];
        chain.countmin[l].insert(bin_digest(full), times);
      }
    }
  }
}

void ChainEnsemble::insert(const Point& raw) {
  require_fitted();
  check_point(raw, schema_);
  insert_sketch(sketch(raw), 1);
  ++fit_size_;
}

void ChainEnsemble::require_fitted() const {
  if (!fitted()) throw InvalidArgument("detector has not been fitted");
}

ScoreReport ChainEnsemble::score_sketch(const Eigen::Ref<const Vector>& s) const {
  require_fitted();
  if (static_cast<std::size_t>(s.size()) != dims())
    throw InvalidArgument("sketch dimension does not match the detector");
  ScoreReport report;
  report.per_chain.reserve(chains_.size());
  std::vector<std::int64_t> full(dims(), 0);
  double total = 0.0;
  for (const auto& chain : chains_) {
    ChainScore cs;
    cs.cells = level_cells(s, chain.features, delta_);
    cs.score = std::numeric_limits<double>::infinity();
    std::optional<std::uint32_t> parent = kRootBin;
    std::fill(full.begin(), full.end(), 0);
    for (std::size_t l = 0; l < cs.cells.size(); ++l) {
      std::uint64_t count = 0;
      if (params_.counter == CounterMode::kExact) {
        if (parent) parent = chain.exact[l].find({*parent, cs.cells[l]});
        if (parent) count = chain.exact[l].count(*parent);
      } else {
        full[chain.features[l]] = cs.cells[l];
        count = chain.countmin[l].count(bin_digest(full));
      }
      const double extrapolated = std::ldexp(static_cast<double>(count), static_cast<int>(l + 1));
      if (extrapolated < cs.score) {
        cs.score = extrapolated;
        cs.level = l + 1;
      }
    }
    total += cs.score;
    report.per_chain.push_back(std::move(cs));
  }
  report.final_score = total / static_cast<double>(chains_.size());
  return report;
}

ScoreReport ChainEnsemble::score(const Point& raw) const {
  require_fitted();
  check_point(raw, schema_);
  return score_sketch(sketch(raw));
}

std::vector<ScoreReport> ChainEnsemble::score_batch(const DatasetTable& data) const {
  require_fitted();
  if (!(data.schema == schema_))
    throw InvalidArgument("dataset schema does not match the detector");
  std::vector<ScoreReport> out;
  out.reserve(data.size());
  for (const auto& row : data.rows) out.push_back(score(row));
  return out;
}

nlohmann::json ChainEnsemble::to_json() const {
  require_fitted();
  nlohmann::json chains = nlohmann::json::array();
  for (const auto& chain : chains_) {
    nlohmann::json levels = nlohmann::json::array();
    if (params_.counter == CounterMode::kExact) {
      for (const auto& c : chain.exact) levels.push_back(c.to_json());
    } else {
      for (const auto& c : chain.countmin) levels.push_back(c.to_json());
    }
    chains.push_back({{"features", chain.features}, {"levels", std::move(levels)}});
  }
  std::vector<double> delta(delta_.data(), delta_.data() + delta_.size());
  return {{"format", "alarm-ensemble/1"},
          {"params", params_to_json(params_)},
          {"schema", schema_to_json(schema_)},
          {"normalizer", normalizer_to_json(normalizer_)},
          {"hash_seed", hashes_.seed()},
          {"delta", delta},
          {"fit_size", fit_size_},
          {"chains", std::move(chains)}};
}

ChainEnsemble ChainEnsemble::from_json(const nlohmann::json& doc) {
  try {
    ChainEnsemble e;
    e.params_ = params_from_json(doc.at("params"));
    e.schema_ = schema_from_json(doc.at("schema"));
    e.normalizer_ = normalizer_from_json(doc.at("normalizer"));
    if (e.normalizer_.ranges.size() != e.schema_.size())
      throw DataError("normalizer does not match schema", "normalizer");
    e.layout_ = OneHotLayout(e.schema_);
    e.hashes_ = HashFamily(e.params_.projection_dims, doc.at("hash_seed").get<std::uint64_t>());
    const auto delta = doc.at("delta").get<std::vector<double>>();
    e.delta_ = Eigen::Map<const Vector>(delta.data(), static_cast<Eigen::Index>(delta.size()));
    e.fit_size_ = doc.at("fit_size").get<std::size_t>();
    for (const auto& c : doc.at("chains")) {
      HalfSpaceChain chain;
      chain.features = c.at("features").get<std::vector<std::size_t>>();
      for (auto f : chain.features)
        if (f >= e.dims()) throw DataError("chain feature index out of range", "features");
      for (const auto& level : c.at("levels")) {
        if (e.params_.counter == CounterMode::kExact) {
          chain.exact.push_back(ExactCounter::from_json(level));
        } else {
          chain.countmin.push_back(CountMinSketch::from_json(level));
        }
      }
      if (chain.exact.size() + chain.countmin.size() != chain.features.size())
        throw DataError("chain level count does not match its depth", "levels");
      e.chains_.push_back(std::move(chain));
    }
    if (e.chains_.empty()) throw DataError("ensemble has no chains", "chains");
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("malformed ensemble JSON: ") + ex.what());
  }
}

std::vector<double> final_scores(std::span<const ScoreReport> reports) {
  std::vector<double> out;
  out.reserve(reports.size());
  for (const auto& r : reports) out.push_back(r.final_score);
  return out;
}

}  // namespace alarmlib
