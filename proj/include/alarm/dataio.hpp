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

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "alarm/common.hpp"
#include "json.hpp"

namespace alarmlib {

enum class FeatureKind { kReal, kCategorical };

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::kReal;
  // Declared category values; empty for real features.
  std::vector<std::string> values;

  bool is_real() const { return kind == FeatureKind::kReal; }
  bool operator==(const FeatureSpec&) const = default;
};

// Ordered, validated list of features. Names are unique and non-empty and
// every categorical feature declares at least one value.
class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<FeatureSpec> features);

  std::size_t size() const { return features_.size(); }
  bool empty() const { return features_.empty(); }
  const FeatureSpec& operator[](std::size_t i) const { return features_[i]; }
  const std::vector<FeatureSpec>& features() const { return features_; }

  std::optional<std::size_t> find(std::string_view name) const;
  // Throws NotFound naming the feature.
  std::size_t index_of(std::string_view name) const;
  std::optional<std::size_t> category_index(std::size_t feature,
                                            std::string_view value) const;

  std::vector<std::size_t> real_indices() const;
  std::vector<std::size_t> categorical_indices() const;
  std::vector<std::string> names() const;

  bool operator==(const FeatureSchema&) const = default;

 private:
  std::vector<FeatureSpec> features_;
};

using Value = std::variant<double, std::string>;

// A row of feature values positionally aligned with a schema.
struct Point {
  std::vector<Value> values;

  std::size_t size() const { return values.size(); }
  double real(std::size_t i) const { return std::get<double>(values[i]); }
  const std::string& category(std::size_t i) const {
    return std::get<std::string>(values[i]);
  }
  bool operator==(const Point&) const = default;
};

enum class Label : std::uint8_t { kInlier = 0, kAnomaly = 1 };

struct DatasetTable {
  FeatureSchema schema;
  std::vector<Point> rows;
  // Present iff the source carried a `label` column.
  std::optional<std::vector<Label>> labels;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }

  // Throws DataError on the first row that does not conform to the schema.
  void validate() const;
  // Subset of rows (labels follow when present).
  DatasetTable select(std::span<const std::size_t> row_indices) const;
};

// Throws DataError if the point does not conform to `schema`.
void check_point(const Point& point, const FeatureSchema& schema,
                 std::size_t row = 0);

struct LoadOptions {
  // Drop features that take a single value over all rows (only when the
  // table has at least two rows). A warning is written to std::clog.
  bool drop_constant_features = true;
};

FeatureSchema schema_from_json(const nlohmann::json& doc);
nlohmann::json schema_to_json(const FeatureSchema& schema);
FeatureSchema read_schema(const std::string& path);
void write_schema(const FeatureSchema& schema, const std::string& path);

// RFC-4180 CSV with a header row matching the schema's feature names and an
// optional trailing `label` column holding 0/1.
DatasetTable parse_csv(std::string_view text, const FeatureSchema& schema,
                       const LoadOptions& options = {});
DatasetTable load_csv(const std::string& path, const std::string& schema_path,
                      const LoadOptions& options = {});

std::string to_csv(const DatasetTable& table);
void write_csv(const DatasetTable& table, const std::string& path,
               const std::string& schema_path);

// Stable content hash of a table (schema + rows + labels), hex encoded.
std::string dataset_fingerprint(const DatasetTable& table);

// Shortest round-trip decimal form of a double.
std::string format_real(double v);

std::vector<std::vector<std::string>> parse_csv_records(std::string_view text);

// Min-max statistics of the real features of a fit set. Entries are aligned
// with the schema; categorical slots hold {0, 0} and are ignored.
struct NormalizationState {
  struct Range {
    double min = 0.0;
    double max = 0.0;
    bool operator==(const Range&) const = default;
  };
  std::vector<Range> ranges;

  bool operator==(const NormalizationState&) const = default;
};

NormalizationState fit_normalizer(const DatasetTable& data);
// (v - min) / (max - min), or 0 when max == min. Values outside the fit range
// map outside [0, 1].
Point normalize(const Point& point, const NormalizationState& state);
Point denormalize(const Point& point, const NormalizationState& state);
double normalize_value(double v, const NormalizationState::Range& range);
double denormalize_value(double v, const NormalizationState::Range& range);

nlohmann::json normalizer_to_json(const NormalizationState& state);
NormalizationState normalizer_from_json(const nlohmann::json& doc);

// Dense encoding of a point: reals take one slot, categoricals a one-hot block.
class OneHotLayout {
 public:
  OneHotLayout() = default;
  explicit OneHotLayout(const FeatureSchema& schema);

  std::size_t width() const { return width_; }
  std::size_t offset(std::size_t feature) const { return offsets_[feature]; }
  std::size_t span(std::size_t feature) const { return spans_[feature]; }
  // Original feature owning encoded dimension `dim`.
  std::size_t feature_of(std::size_t dim) const { return owner_[dim]; }

  Vector encode(const Point& point) const;
  // Categorical blocks decode to their arg-max value.
  Point decode(const Eigen::Ref<const Vector>& encoded) const;

 private:
  FeatureSchema schema_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> spans_;
  std::vector<std::size_t> owner_;
  std::size_t width_ = 0;
};

}  // namespace alarmlib
