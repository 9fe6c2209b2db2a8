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

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <absl/container/flat_hash_map.h>

#include "alarm/common.hpp"
#include "alarm/count_min.hpp"
#include "alarm/dataio.hpp"
#include "alarm/hashing.hpp"
#include "json.hpp"

namespace alarmlib {

enum class CounterMode { kExact, kCountMin };

struct DetectorParams {
  std::size_t chains = 200;  // M
  std::size_t depth = 20;    // L
  // Number of hashed projection dimensions K; 0 disables projection and the
  // chains work on the one-hot encoded, min-max normalized features.
  std::size_t projection_dims = 0;
  CounterMode counter = CounterMode::kExact;
  std::size_t cms_rows = 3;
  std::size_t cms_cols = 50;
  std::uint64_t seed = 0;

  bool projected() const { return projection_dims > 0; }
};

nlohmann::json params_to_json(const DetectorParams& params);
DetectorParams params_from_json(const nlohmann::json& doc);

// Replacement width for projected dimensions with zero range.
inline constexpr double kMinBinWidth = 1e-9;

// Bin of a level, identified by its parent bin at the previous level and the
// integer cell along that level's halving feature. Because z_l differs from
// z_{l-1} only at f_l, (parent, cell) identifies the full bin-id vector.
struct BinKey {
  std::uint32_t parent = 0;
  std::int64_t cell = 0;

  bool operator==(const BinKey&) const = default;
  template <typename H>
  friend H AbslHashValue(H h, const BinKey& k) {
    return H::combine(std::move(h), k.parent, k.cell);
  }
};

// Exact per-level bin counts. Bin indices are assigned in insertion order.
class ExactCounter {
 public:
  std::optional<std::uint32_t> find(const BinKey& key) const;
  // Increments the bin (creating it if needed) and returns its index.
  std::uint32_t insert(const BinKey& key, std::uint64_t times = 1);
  std::uint64_t count(std::uint32_t index) const { return counts_[index]; }
  std::size_t bins() const { return counts_.size(); }
  std::uint64_t total() const;

  nlohmann::json to_json() const;
  static ExactCounter from_json(const nlohmann::json& doc);

 private:
  absl::flat_hash_map<BinKey, std::uint32_t> index_;
  std::vector<BinKey> keys_;
  std::vector<std::uint64_t> counts_;
};

// Canonical 64-bit digest of a full bin-id vector (nonzero entries with
// their positions), used as the count-min key.
std::uint64_t bin_digest(std::span<const std::int64_t> bin_id);

// Count-min lookup of a full bin-id vector.
std::uint64_t cms_count(const CountMinSketch& counter,
                        std::span<const std::int64_t> bin_id);

struct HalfSpaceChain {
  // Halving feature per level, 0-based indices into the sketch.
  std::vector<std::size_t> features;
  std::vector<ExactCounter> exact;       // kExact: one per level
  std::vector<CountMinSketch> countmin;  // kCountMin: one per level

  std::size_t depth() const { return features.size(); }
};

// floor(z) with saturation at the int64 range.
std::int64_t floor_to_cell(double z);

// Incremental bin-id path: the cell z_l[f_l] at every level. On the first
// occurrence of f, z[f] = s[f] / delta[f]; each repeat doubles it.
std::vector<std::int64_t> level_cells(const Eigen::Ref<const Vector>& sketch,
                                      std::span<const std::size_t> features,
                                      const Eigen::Ref<const Vector>& delta);

// Full bin-id vectors z_1..z_L (each of sketch dimension).
std::vector<std::vector<std::int64_t>> bin_id_path(
    const Eigen::Ref<const Vector>& sketch, const HalfSpaceChain& chain,
    const Eigen::Ref<const Vector>& delta);

struct ChainScore {
  double score = 0.0;                // min_l 2^l C_l[z_l]
  std::size_t level = 1;             // 1-based arg-min level, ties -> smallest
  std::vector<std::int64_t> cells;   // z_l[f_l] per level
};

struct ScoreReport {
  double final_score = 0.0;  // mean over chains; lower = more anomalous
  std::vector<ChainScore> per_chain;
};

// Fitted detector. Immutable after fit(), so scoring is safe to run
// concurrently.
class ChainEnsemble {
 public:
  ChainEnsemble() = default;

  static ChainEnsemble fit(const DatasetTable& data, const DetectorParams& params);

  bool fitted() const { return !chains_.empty(); }
  const DetectorParams& params() const { return params_; }
  const FeatureSchema& schema() const { return schema_; }
  const NormalizationState& normalizer() const { return normalizer_; }
  const HashFamily& hashes() const { return hashes_; }
  const OneHotLayout& layout() const { return layout_; }
  const Vector& delta() const { return delta_; }
  const std::vector<HalfSpaceChain>& chains() const { return chains_; }
  std::size_t fit_size() const { return fit_size_; }
  std::size_t dims() const { return static_cast<std::size_t>(delta_.size()); }

  // Normalized then projected (or one-hot encoded) representation of a raw point.
  Vector sketch(const Point& raw) const;

  ScoreReport score(const Point& raw) const;
  ScoreReport score_sketch(const Eigen::Ref<const Vector>& sketch) const;
  std::vector<ScoreReport> score_batch(const DatasetTable& data) const;

  // Adds a raw point to every counter of every chain.
  void insert(const Point& raw);

  nlohmann::json to_json() const;
  static ChainEnsemble from_json(const nlohmann::json& doc);

 private:
  void insert_sketch(const Eigen::Ref<const Vector>& sketch, std::uint64_t times);
  void require_fitted() const;

  DetectorParams params_;
  FeatureSchema schema_;
  NormalizationState normalizer_;
  OneHotLayout layout_;
  HashFamily hashes_;
  Vector delta_;
  std::vector<HalfSpaceChain> chains_;
  std::size_t fit_size_ = 0;
};

inline ChainEnsemble fit(const DatasetTable& data, const DetectorParams& params) {
  return ChainEnsemble::fit(data, params);
}
inline ScoreReport score(const Point& point, const ChainEnsemble& ensemble) {
  return ensemble.score(point);
}
inline std::vector<ScoreReport> score_batch(const DatasetTable& data,
                                            const ChainEnsemble& ensemble) {
  return ensemble.score_batch(data);
}

std::vector<double> final_scores(std::span<const ScoreReport> reports);

}  // namespace alarmlib
