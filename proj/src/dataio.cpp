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

#include "alarm/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <unordered_set>

namespace alarmlib {
namespace {

constexpr std::string_view kLabelColumn = "label";

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open file: " + path, path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write file: " + path, path);
  out << content;
  if (!out) throw Error("write failed: " + path, path);
}

std::optional<double> parse_real(std::string_view cell) {
  while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
  while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  if (cell.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
  if (!std::isfinite(v)) return std::nullopt;
  return v;
}

std::string quote_cell(const std::string& cell) {
  const bool needs = cell.find_first_of(",\"\r\n") != std::string::npos ||
                     (!cell.empty() && (cell.front() == ' ' || cell.back() == ' '));
  if (!needs) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

FeatureSchema::FeatureSchema(std::vector<FeatureSpec> features)
    : features_(std::move(features)) {
  std::unordered_set<std::string> seen;
  for (const auto& f : features_) {
    if (f.name.empty()) throw DataError("feature name must be non-empty");
    if (f.name == kLabelColumn)
      throw DataError("`label` is reserved and cannot be a feature", f.name);
    if (!seen.insert(f.name).second)
      throw DataError("duplicate feature name: " + f.name, f.name);
    if (f.kind == FeatureKind::kCategorical) {
      if (f.values.empty())
        throw DataError("categorical feature has no values: " + f.name, f.name);
      std::unordered_set<std::string> vals(f.values.begin(), f.values.end());
      if (vals.size() != f.values.size())
        throw DataError("duplicate category value in " + f.name, f.name);
    } else if (!f.values.empty()) {
      throw DataError("real feature declares category values: " + f.name, f.name);
    }
  }
}

std::optional<std::size_t> FeatureSchema::find(std::string_view name) const {
  for (std::size_t i = 0; i < features_.size(); ++i)
    if (features_[i].name == name) return i;
  return std::nullopt;
}

std::size_t FeatureSchema::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw NotFound("unknown feature: " + std::string(name), std::string(name));
}

std::optional<std::size_t> FeatureSchema::category_index(
    std::size_t feature, std::string_view value) const {
  const auto& vals = features_[feature].values;
  for (std::size_t i = 0; i < vals.size(); ++i)
    if (vals[i] == value) return i;
  return std::nullopt;
}

std::vector<std::size_t> FeatureSchema::real_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < features_.size(); ++i)
    if (features_[i].is_real()) out.push_back(i);
  return out;
}

std::vector<std::size_t> FeatureSchema::categorical_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < features_.size(); ++i)
    if (!features_[i].is_real()) out.push_back(i);
  return out;
}

std::vector<std::string> FeatureSchema::names() const {
  std::vector<std::string> out;
  out.reserve(features_.size());
  for (const auto& f : features_) out.push_back(f.name);
  return out;
}

void check_point(const Point& point, const FeatureSchema& schema,
                 std::size_t row) {
  if (point.size() != schema.size())
    throw DataError("row " + std::to_string(row) + ": expected " +
                    std::to_string(schema.size()) + " values, got " +
                    std::to_string(point.size()));
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto& f = schema[j];
    if (f.is_real()) {
      const auto* v = std::get_if<double>(&point.values[j]);
      if (v == nullptr || !std::isfinite(*v))
        throw DataError("row " + std::to_string(row) + ", feature " + f.name +
                            ": expected a finite number",
                        f.name);
    } else {
      const auto* v = std::get_if<std::string>(&point.values[j]);
      if (v == nullptr || !schema.category_index(j, *v))
        throw DataError("row " + std::to_string(row) + ", feature " + f.name +
                            ": value not declared in schema",
                        f.name);
    }
  }
}

void DatasetTable::validate() const {
  for (std::size_t i = 0; i < rows.size(); ++i) check_point(rows[i], schema, i + 1);
  if (labels && labels->size() != rows.size())
    throw DataError("label count does not match row count", "label");
}

DatasetTable DatasetTable::select(std::span<const std::size_t> row_indices) const {
  DatasetTable out{schema, {}, std::nullopt};
  out.rows.reserve(row_indices.size());
  if (labels) out.labels.emplace();
  for (auto i : row_indices) {
    out.rows.push_back(rows.at(i));
    if (labels) out.labels->push_back((*labels)[i]);
  }
  return out;
}

FeatureSchema schema_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("features") || !doc["features"].is_array())
    throw DataError("schema must be an object with a `features` array", "features");
  std::vector<FeatureSpec> specs;
  for (const auto& f : doc["features"]) {
    if (!f.is_object() || !f.contains("name") || !f["name"].is_string())
      throw DataError("schema feature missing string `name`", "name");
    FeatureSpec spec;
    spec.name = f["name"].get<std::string>();
    const std::string kind = f.value("kind", std::string("real"));
    if (kind == "real") {
      spec.kind = FeatureKind::kReal;
    } else if (kind == "categorical") {
      spec.kind = FeatureKind::kCategorical;
      if (!f.contains("values") || !f["values"].is_array())
        throw DataError("categorical feature needs `values`: " + spec.name, spec.name);
      for (const auto& v : f["values"]) {
        if (!v.is_string())
          throw DataError("category values must be strings: " + spec.name, spec.name);
        spec.values.push_back(v.get<std::string>());
      }
    } else {
      throw DataError("unknown feature kind `" + kind + "` for " + spec.name, spec.name);
    }
    specs.push_back(std::move(spec));
  }
  return FeatureSchema(std::move(specs));
}

nlohmann::json schema_to_json(const FeatureSchema& schema) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& f : schema.features()) {
    nlohmann::json j{{"name", f.name}, {"kind", f.is_real() ? "real" : "categorical"}};
    if (!f.is_real()) j["values"] = f.values;
    features.push_back(std::move(j));
  }
  return {{"features", std::move(features)}};
}

FeatureSchema read_schema(const std::string& path) {
  const auto text = read_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("schema is not valid JSON: " + std::string(e.what()), path);
  }
  return schema_from_json(doc);
}

void write_schema(const FeatureSchema& schema, const std::string& path) {
  write_file(path, schema_to_json(schema).dump(2) + "\n");
}

std::vector<std::vector<std::string>> parse_csv_records(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string cell;
  bool in_quotes = false;
  bool cell_started = false;
  auto end_record = [&] {
    record.push_back(std::move(cell));
    cell.clear();
    // A lone empty cell is a blank line.
    if (!(record.size() == 1 && record[0].empty() && !cell_started))
      records.push_back(std::move(record));
    record.clear();
    cell_started = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cell += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        cell_started = true;
        break;
      case ',':
        record.push_back(std::move(cell));
        cell.clear();
        cell_started = true;
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        break;
      default:
        cell += c;
        cell_started = true;
    }
  }
  if (in_quotes) throw DataError("unterminated quoted field in CSV");
  if (cell_started || !cell.empty() || !record.empty()) end_record();
  return records;
}

namespace {

DatasetTable drop_constant_features(DatasetTable table) {
  if (table.rows.size() < 2) return table;
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < table.schema.size(); ++j) {
    const auto& first = table.rows.front().values[j];
    const bool constant =
        std::all_of(table.rows.begin(), table.rows.end(),
                    [&](const Point& p) { return p.values[j] == first; });
    if (constant) {
      std::clog << "warning: dropping constant feature `" << table.schema[j].name
                << "`\n";
    } else {
      keep.push_back(j);
    }
  }
  if (keep.size() == table.schema.size()) return table;
  std::vector<FeatureSpec> specs;
  for (auto j : keep) specs.push_back(table.schema[j]);
  DatasetTable out{FeatureSchema(std::move(specs)), {}, std::move(table.labels)};
  out.rows.reserve(table.rows.size());
  for (auto& row : table.rows) {
    Point p;
    p.values.reserve(keep.size());
    for (auto j : keep) p.values.push_back(std::move(row.values[j]));
    out.rows.push_back(std::move(p));
  }
  return out;
}

}  // namespace

DatasetTable parse_csv(std::string_view text, const FeatureSchema& schema,
                       const LoadOptions& options) {
  auto records = parse_csv_records(text);
  if (records.empty()) throw DataError("CSV has no header row");
  const auto& header = records.front();
  const bool has_label = !header.empty() && header.back() == kLabelColumn;
  const std::size_t n_features = header.size() - (has_label ? 1 : 0);
  if (n_features != schema.size())
    throw DataError("CSV header has " + std::to_string(n_features) +
                    " feature columns, schema declares " +
                    std::to_string(schema.size()));
  for (std::size_t j = 0; j < n_features; ++j)
    if (header[j] != schema[j].name)
      throw DataError("CSV header column " + std::to_string(j) + " is `" +
                          header[j] + "`, schema expects `" + schema[j].name + "`",
                      schema[j].name);

  DatasetTable table{schema, {}, std::nullopt};
  if (has_label) table.labels.emplace();
  table.rows.reserve(records.size() - 1);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const std::size_t row = r;  // 1-based data row
    const auto& rec = records[r];
    if (rec.size() != header.size())
      throw DataError("row " + std::to_string(row) + ": expected " +
                      std::to_string(header.size()) + " cells, got " +
                      std::to_string(rec.size()));
    Point p;
    p.values.reserve(n_features);
    for (std::size_t j = 0; j < n_features; ++j) {
      const auto& f = schema[j];
      const auto& cell = rec[j];
      if (cell.empty())
        throw DataError("row " + std::to_string(row) + ", feature " + f.name +
                            ": missing value",
                        f.name);
      if (f.is_real()) {
        auto v = parse_real(cell);
        if (!v)
          throw DataError("row " + std::to_string(row) + ", feature " + f.name +
                              ": cannot parse `" + cell + "` as a number",
                          f.name);
        p.values.emplace_back(*v);
      } else {
        if (!schema.category_index(j, cell))
          throw DataError("row " + std::to_string(row) + ", feature " + f.name +
                              ": value `" + cell + "` not declared in schema",
                          f.name);
        p.values.emplace_back(cell);
      }
    }
    if (has_label) {
      const auto& cell = rec.back();
      if (cell == "1") {
        table.labels->push_back(Label::kAnomaly);
      } else if (cell == "0") {
        table.labels->push_back(Label::kInlier);
      } else {
        throw DataError("row " + std::to_string(row) + ": label must be 0 or 1",
                        std::string(kLabelColumn));
      }
    }
    table.rows.push_back(std::move(p));
  }
  if (options.drop_constant_features) return drop_constant_features(std::move(table));
  return table;
}

DatasetTable load_csv(const std::string& path, const std::string& schema_path,
                      const LoadOptions& options) {
  const auto schema = read_schema(schema_path);
  return parse_csv(read_file(path), schema, options);
}

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string to_csv(const DatasetTable& table) {
  std::string out;
  for (std::size_t j = 0; j < table.schema.size(); ++j) {
    if (j) out += ',';
    out += quote_cell(table.schema[j].name);
  }
  if (table.labels) out += ",label";
  out += '\n';
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out += ',';
      if (const auto* d = std::get_if<double>(&row.values[j])) {
        out += format_real(*d);
      } else {
        out += quote_cell(std::get<std::string>(row.values[j]));
      }
    }
    if (table.labels) out += (*table.labels)[i] == Label::kAnomaly ? ",1" : ",0";
    out += '\n';
  }
  return out;
}

void write_csv(const DatasetTable& table, const std::string& path,
               const std::string& schema_path) {
  write_file(path, to_csv(table));
  write_schema(table.schema, schema_path);
}

std::string dataset_fingerprint(const DatasetTable& table) {
  const auto schema = schema_to_json(table.schema).dump();
  const auto body = to_csv(table);
  std::uint64_t h = fnv1a64(schema.data(), schema.size());
  h = fnv1a64(body.data(), body.size(), h);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

NormalizationState fit_normalizer(const DatasetTable& data) {
  if (data.empty()) throw InvalidArgument("cannot fit a normalizer on an empty dataset");
  NormalizationState state;
  state.ranges.resize(data.schema.size());
  for (std::size_t j = 0; j < data.schema.size(); ++j) {
    if (!data.schema[j].is_real()) continue;
    double lo = data.rows.front().real(j);
    double hi = lo;
    for (const auto& row : data.rows) {
      lo = std::min(lo, row.real(j));
      hi = std::max(hi, row.real(j));
    }
    state.ranges[j] = {lo, hi};
  }
  return state;
}

double normalize_value(double v, const NormalizationState::Range& range) {
  if (range.max == range.min) return 0.0;
  return (v - range.min) / (range.max - range.min);
}

double denormalize_value(double v, const NormalizationState::Range& range) {
  return range.min + v * (range.max - range.min);
}

Point normalize(const Point& point, const NormalizationState& state) {
  if (point.size() != state.ranges.size())
    throw DataError("point width does not match normalizer");
  Point out = point;
  for (std::size_t j = 0; j < point.size(); ++j)
    if (auto* v = std::get_if<double>(&out.values[j]))
      *v = normalize_value(*v, state.ranges[j]);
  return out;
}

Point denormalize(const Point& point, const NormalizationState& state) {
  if (point.size() != state.ranges.size())
    throw DataError("point width does not match normalizer");
  Point out = point;
  for (std::size_t j = 0; j < point.size(); ++j)
    if (auto* v = std::get_if<double>(&out.values[j]))
      *v = denormalize_value(*v, state.ranges[j]);
  return out;
}

nlohmann::json normalizer_to_json(const NormalizationState& state) {
  nlohmann::json ranges = nlohmann::json::array();
  for (const auto& r : state.ranges) ranges.push_back({r.min, r.max});
  return ranges;
}

NormalizationState normalizer_from_json(const nlohmann::json& doc) {
  NormalizationState state;
  for (const auto& r : doc) {
    NormalizationState::Range range{r.at(0).get<double>(), r.at(1).get<double>()};
    if (range.min > range.max) throw DataError("normalizer range has min > max");
    state.ranges.push_back(range);
  }
  return state;
}

OneHotLayout::OneHotLayout(const FeatureSchema& schema) : schema_(schema) {
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const std::size_t w = schema[j].is_real() ? 1 : schema[j].values.size();
    offsets_.push_back(width_);
    spans_.push_back(w);
    for (std::size_t k = 0; k < w; ++k) owner_.push_back(j);
    width_ += w;
  }
}

Vector OneHotLayout::encode(const Point& point) const {
  Vector out = Vector::Zero(static_cast<Eigen::Index>(width_));
  for (std::size_t j = 0; j < schema_.size(); ++j) {
    if (schema_[j].is_real()) {
      out[static_cast<Eigen::Index>(offsets_[j])] = point.real(j);
    } else {
      auto c = schema_.category_index(j, point.category(j));
      if (!c)
        throw DataError("value `" + point.category(j) + "` not declared for " +
                            schema_[j].name,
                        schema_[j].name);
      out[static_cast<Eigen::Index>(offsets_[j] + *c)] = 1.0;
    }
  }
  return out;
}

Point OneHotLayout::decode(const Eigen::Ref<const Vector>& encoded) const {
  Point p;
  p.values.reserve(schema_.size());
  for (std::size_t j = 0; j < schema_.size(); ++j) {
    const auto off = static_cast<Eigen::Index>(offsets_[j]);
    if (schema_[j].is_real()) {
      p.values.emplace_back(encoded[off]);
    } else {
      Eigen::Index best = 0;
      encoded.segment(off, static_cast<Eigen::Index>(spans_[j])).maxCoeff(&best);
      p.values.emplace_back(schema_[j].values[static_cast<std::size_t>(best)]);
    }
  }
  return p;
}

}  // namespace alarmlib
