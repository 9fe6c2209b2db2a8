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

#include "alarm/service.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <iostream>
#include <sstream>

#include "httplib.h"

namespace alarmlib {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- config

namespace {

std::string trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return std::string(s.substr(a, b - a + 1));
}

template <typename T>
T parse_number(const std::string& text, const std::string& key) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end)
    throw InvalidArgument("`" + text + "` is not a valid value for " + key, key);
  return value;
}

void set_key(ServiceConfig& c, const std::string& key, const std::string& value) {
  if (key == "host") c.host = value;
  else if (key == "port") c.port = parse_number<int>(value, key);
  else if (key == "data_dir") c.data_dir = value;
  else if (key == "rule_db") c.rule_db = value;
  else if (key == "chains") c.detector.chains = parse_number<std::size_t>(value, key);
  else if (key == "depth") c.detector.depth = parse_number<std::size_t>(value, key);
  else if (key == "projection_dims") c.detector.projection_dims = parse_number<std::size_t>(value, key);
  else if (key == "cms_rows") c.detector.cms_rows = parse_number<std::size_t>(value, key);
  else if (key == "cms_cols") c.detector.cms_cols = parse_number<std::size_t>(value, key);
  else if (key == "seed") c.detector.seed = parse_number<std::uint64_t>(value, key);
  else if (key == "top_k") c.top_k = parse_number<std::size_t>(value, key);
  else if (key == "counter") {
    if (value == "exact") c.detector.counter = CounterMode::kExact;
    else if (value == "countmin") c.detector.counter = CounterMode::kCountMin;
    else throw InvalidArgument("counter must be `exact` or `countmin`", key);
  } else if (key == "simulator_preset") {
    if (value != "desk" && value != "paper")
      throw InvalidArgument("simulator_preset must be `desk` or `paper`", key);
    c.simulator_preset = value;
  } else {
    throw InvalidArgument("unknown configuration key `" + key + "`", key);
  }
}

}  // namespace

std::vector<std::string> config_keys() {
  return {"host",     "port",     "data_dir", "rule_db", "chains", "depth",           "projection_dims",
          "cms_rows", "cms_cols", "seed",     "top_k",   "counter", "simulator_preset"};
}

std::string ServiceConfig::rule_db_path() const {
  return rule_db.empty() ? (fs::path(data_dir) / "rules.jsonl").string() : rule_db;
}

void ServiceConfig::prepare() const {
  std::error_code ec;
  fs::create_directories(fs::path(data_dir) / "datasets", ec);
  fs::create_directories(fs::path(data_dir) / "runs", ec);
  if (ec) throw InvalidArgument("cannot create data directory " + data_dir + ": " + ec.message(), "data_dir");
  const auto probe = fs::path(data_dir) / ".write-probe";
  if (!std::ofstream(probe)) throw InvalidArgument("data directory is not writable: " + data_dir, "data_dir");
  fs::remove(probe, ec);
  const auto db = fs::path(rule_db_path());
  if (db.has_parent_path()) fs::create_directories(db.parent_path(), ec);
  if (!std::ofstream(db, std::ios::app))
    throw InvalidArgument("rule db is not writable: " + db.string(), "rule_db");
}

void apply_config_text(ServiceConfig& config, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidArgument(origin + ":" + std::to_string(number) + ": expected key = value");
    set_key(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void apply_config_file(ServiceConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read config file " + path, "config");
  std::stringstream buffer;
  buffer << in.rdbuf();
  apply_config_text(config, buffer.str(), path);
}

void apply_env_overrides(ServiceConfig& config,
                         const std::function<const char*(const char*)>& getenv) {
  for (const auto& key : config_keys()) {
    std::string name = "ALARM_" + key;
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::toupper(c); });
    if (const char* v = getenv(name.c_str())) set_key(config, key, v);
  }
}

// ---------------------------------------------------------------- runs

struct Service::Run {
  std::string id;
  std::string dataset_id;
  DetectorParams params;
  std::size_t top_k = 50;
  std::shared_ptr<const DatasetTable> data;

  mutable std::shared_mutex mutex;
  std::string status = "queued";
  std::string error;
  ChainEnsemble ensemble;
  std::vector<ScoreReport> reports;
  std::vector<double> scores;
  std::vector<std::size_t> order;  // rows by ascending score, ties by row
  std::optional<std::vector<std::size_t>> imported;

  mutable std::mutex cache_mutex;
  mutable std::map<std::size_t, ImportanceVector> importance_cache;
  mutable std::map<std::size_t, SummaryLayout> summary_cache;
  mutable std::size_t last_clusters = 1;

  std::vector<std::size_t> selection() const {
    if (imported) return *imported;
    const auto n = std::min(top_k, order.size());
    return {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n)};
  }

  ImportanceVector importance(std::size_t row) const {
    std::lock_guard lock(cache_mutex);
    auto it = importance_cache.find(row);
    if (it == importance_cache.end())
      it = importance_cache.emplace(row, explain(data->rows[row], reports[row], ensemble)).first;
    return it->second;
  }

  SummaryLayout layout(std::size_t k) const {
    {
      std::lock_guard lock(cache_mutex);
      last_clusters = k;
      if (auto it = summary_cache.find(k); it != summary_cache.end()) return it->second;
    }
    const auto rows = selection();
    std::vector<double> s;
    std::vector<ImportanceVector> imp;
    for (auto r : rows) {
      s.push_back(scores[r]);
      imp.push_back(importance(r));
    }
    if (rows.empty()) throw InvalidArgument("no anomalies selected", "rows");
    auto layout = summarize(rows, s, imp, k);
    std::lock_guard lock(cache_mutex);
    return summary_cache.emplace(k, std::move(layout)).first->second;
  }

  void finish(ChainEnsemble fitted) {
    auto reps = fitted.score_batch(*data);
    auto fs = final_scores(reps);
    std::vector<std::size_t> ord(fs.size());
    std::iota(ord.begin(), ord.end(), 0);
    std::stable_sort(ord.begin(), ord.end(), [&](auto a, auto b) { return fs[a] < fs[b]; });
    std::unique_lock lock(mutex);
    ensemble = std::move(fitted);
    reports = std::move(reps);
    scores = std::move(fs);
    order = std::move(ord);
    status = "done";
  }
};

namespace {

std::string hex16(std::uint64_t h) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

std::string now_iso8601() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

void write_text(const fs::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp);
    out << text;
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

DetectorParams merge_params(DetectorParams base, const nlohmann::json& overrides) {
  if (overrides.is_null()) return base;
  if (!overrides.is_object()) throw InvalidArgument("params must be an object", "params");
  nlohmann::json merged = params_to_json(base);
  for (const auto& [key, value] : overrides.items()) {
    if (!merged.contains(key)) throw InvalidArgument("unknown detector parameter `" + key + "`", key);
    merged[key] = value;
  }
  return params_from_json(merged);
}

std::vector<Point> gather(const DatasetTable& data, std::span<const std::size_t> rows) {
  std::vector<Point> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(data.rows[r]);
  return out;
}

template <typename T>
T required(const nlohmann::json& body, const char* key) {
  if (!body.is_object() || !body.contains(key)) throw InvalidArgument(std::string("missing field `") + key + "`", key);
  try {
    return body.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InvalidArgument(std::string("field `") + key + "` has the wrong type", key);
  }
}

template <typename T>
std::optional<T> optional_field(const nlohmann::json& body, const char* key) {
  if (!body.is_object() || !body.contains(key) || body.at(key).is_null()) return std::nullopt;
  return required<T>(body, key);
}

}  // namespace

Service::Service(ServiceConfig config) : config_(std::move(config)), rules_(config_.rule_db_path()) {
  config_.prepare();
  reload();
}

Service::~Service() {
  std::lock_guard lock(jobs_mutex_);
  for (auto& t : jobs_)
    if (t.joinable()) t.join();
}

void Service::reload() {
  const auto ds_dir = fs::path(config_.data_dir) / "datasets";
  for (const auto& entry : fs::directory_iterator(ds_dir)) {
    const auto name = entry.path().filename().string();
    if (entry.path().extension() != ".csv") continue;
    const auto id = entry.path().stem().string();
    auto table = load_csv(entry.path().string(), (ds_dir / (id + ".schema.json")).string(),
                          LoadOptions{.drop_constant_features = false});
    datasets_[id] = std::make_shared<const DatasetTable>(std::move(table));
  }
  const auto run_dir = fs::path(config_.data_dir) / "runs";
  std::vector<fs::path> spills;
  for (const auto& entry : fs::directory_iterator(run_dir))
    if (entry.path().extension() == ".json") spills.push_back(entry.path());
  std::sort(spills.begin(), spills.end());
  for (const auto& path : spills) {
    const auto doc = nlohmann::json::parse(read_text(path));
    auto run = std::make_shared<Run>();
    run->id = doc.at("run_id").get<std::string>();
    run->dataset_id = doc.at("dataset_id").get<std::string>();
    run->params = params_from_json(doc.at("params"));
    run->top_k = doc.at("top_k").get<std::size_t>();
    auto ds = datasets_.find(run->dataset_id);
    if (ds == datasets_.end()) continue;
    run->data = ds->second;
    run->finish(ChainEnsemble::from_json(doc.at("ensemble")));
    if (doc.contains("imported") && !doc["imported"].is_null())
      run->imported = doc["imported"].get<std::vector<std::size_t>>();
    runs_[run->id] = run;
  }
}

Json Service::upload_dataset(const std::string& csv, const nlohmann::json& schema_doc) {
  FeatureSchema schema;
  try {
    schema = schema_from_json(schema_doc);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed schema: ") + e.what(), "schema");
  }
  auto table = parse_csv(csv, schema);
  const auto id = "ds-" + dataset_fingerprint(table);
  {
    std::unique_lock lock(mutex_);
    if (!datasets_.count(id)) {
      const auto dir = fs::path(config_.data_dir) / "datasets";
      write_csv(table, (dir / (id + ".csv")).string(), (dir / (id + ".schema.json")).string());
      datasets_[id] = std::make_shared<const DatasetTable>(table);
    }
  }
  Json out;
  out["dataset_id"] = id;
  out["rows"] = table.size();
  out["features"] = table.schema.names();
  out["labelled"] = table.labels.has_value();
  return out;
}

const DatasetTable& Service::dataset(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = datasets_.find(id);
  if (it == datasets_.end()) throw NotFound("unknown dataset " + id, "dataset_id");
  return *it->second;
}

std::shared_ptr<Service::Run> Service::find_run(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = runs_.find(id);
  if (it == runs_.end()) throw NotFound("unknown run " + id, "run_id");
  return it->second;
}

std::shared_ptr<Service::Run> Service::ready_run(const std::string& id) const {
  auto run = find_run(id);
  std::shared_lock lock(run->mutex);
  if (run->status == "failed") throw Conflict("run " + id + " failed: " + run->error, "run_id");
  if (run->status != "done") throw Conflict("run " + id + " is still " + run->status, "run_id");
  return run;
}

void Service::fit_run(const std::shared_ptr<Run>& run) {
  {
    std::unique_lock lock(run->mutex);
    run->status = "running";
  }
  try {
    auto ensemble = ChainEnsemble::fit(*run->data, run->params);
    nlohmann::json spill{{"run_id", run->id},
                         {"dataset_id", run->dataset_id},
                         {"params", params_to_json(run->params)},
                         {"top_k", run->top_k},
                         {"imported", nullptr},
                         {"ensemble", ensemble.to_json()}};
    write_text(fs::path(config_.data_dir) / "runs" / (run->id + ".json"), spill.dump());
    run->finish(std::move(ensemble));
  } catch (const std::exception& e) {
    std::unique_lock lock(run->mutex);
    run->status = "failed";
    run->error = e.what();
  }
}

Json Service::create_run(const nlohmann::json& body) {
  const auto dataset_id = required<std::string>(body, "dataset_id");
  std::shared_ptr<const DatasetTable> data;
  {
    std::shared_lock lock(mutex_);
    auto it = datasets_.find(dataset_id);
    if (it == datasets_.end()) throw NotFound("unknown dataset " + dataset_id, "dataset_id");
    data = it->second;
  }
  const auto params = merge_params(config_.detector, body.is_object() && body.contains("params")
                                                         ? body.at("params")
                                                         : nlohmann::json());
  if (params.chains < 1) throw InvalidArgument("chains must be >= 1", "chains");
  if (params.depth < 1) throw InvalidArgument("depth must be >= 1", "depth");
  const auto top_k = optional_field<std::size_t>(body, "top_k").value_or(config_.top_k);
  const bool wait = optional_field<bool>(body, "wait").value_or(false);

  const auto key = dataset_id + "|" + params_to_json(params).dump() + "|" + std::to_string(top_k);
  const auto id = "run-" + hex16(fnv1a64(key.data(), key.size())).substr(0, 12);
  std::shared_ptr<Run> run;
  bool fresh = false;
  {
    std::unique_lock lock(mutex_);
    auto& slot = runs_[id];
    if (!slot) {
      slot = std::make_shared<Run>();
      slot->id = id;
      slot->dataset_id = dataset_id;
      slot->params = params;
      slot->top_k = top_k;
      slot->data = data;
      fresh = true;
    }
    run = slot;
  }
  if (fresh) {
    if (wait) {
      fit_run(run);
    } else {
      std::lock_guard lock(jobs_mutex_);
      jobs_.emplace_back([this, run] { fit_run(run); });
    }
  }
  if (wait) wait_run(id);
  return run_status(id);
}

Json Service::run_status(const std::string& id) const {
  auto run = find_run(id);
  std::shared_lock lock(run->mutex);
  Json out;
  out["run_id"] = run->id;
  out["dataset_id"] = run->dataset_id;
  out["status"] = run->status;
  if (!run->error.empty()) out["error"] = run->error;
  out["params"] = params_to_json(run->params);
  out["rows"] = run->data->size();
  out["top_k"] = run->top_k;
  out["imported"] = run->imported.has_value();
  return out;
}

Json Service::wait_run(const std::string& id) const {
  auto run = find_run(id);
  for (;;) {
    {
      std::shared_lock lock(run->mutex);
      if (run->status == "done" || run->status == "failed") break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  return run_status(id);
}

Json Service::anomalies(const std::string& id, std::optional<std::size_t> top) const {
  auto run = ready_run(id);
  std::shared_lock lock(run->mutex);
  std::vector<std::size_t> rows;
  if (run->imported) {
    rows = *run->imported;
    std::stable_sort(rows.begin(), rows.end(),
                     [&](auto a, auto b) { return run->scores[a] < run->scores[b]; });
    if (top && *top < rows.size()) rows.resize(*top);
  } else {
    const auto n = std::min(top.value_or(run->top_k), run->order.size());
    rows.assign(run->order.begin(), run->order.begin() + static_cast<std::ptrdiff_t>(n));
  }
  Json list = Json::array();
  for (auto r : rows) {
    Json entry;
    entry["row"] = r;
    entry["score"] = run->scores[r];
    entry["importances"] = importance_to_json(run->importance(r));
    list.push_back(std::move(entry));
  }
  Json out;
  out["run_id"] = run->id;
  out["imported"] = run->imported.has_value();
  out["anomalies"] = std::move(list);
  return out;
}

Json Service::import_labels(const std::string& id, const nlohmann::json& body) {
  auto run = ready_run(id);
  auto rows = required<std::vector<std::size_t>>(body, "rows");
  std::unique_lock lock(run->mutex);
  for (auto r : rows)
    if (r >= run->data->size())
      throw InvalidArgument("row " + std::to_string(r) + " is out of range", "rows");
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  if (rows.empty())
    run->imported.reset();
  else
    run->imported = rows;
  {
    std::lock_guard cache(run->cache_mutex);
    run->summary_cache.clear();
  }
  Json out;
  out["run_id"] = run->id;
  out["imported"] = run->imported.has_value();
  out["rows"] = run->selection();
  return out;
}

Json Service::summary(const std::string& id, std::size_t clusters) const {
  auto run = ready_run(id);
  std::shared_lock lock(run->mutex);
  return summary_to_json(run->layout(clusters));
}

Json Service::explore(const std::string& id, const std::vector<std::string>& features) const {
  auto run = ready_run(id);
  std::shared_lock lock(run->mutex);
  return slice_to_json(explore_slice(*run->data, run->selection(), features));
}

Json Service::lookout(const std::string& id, std::size_t budget) const {
  auto run = ready_run(id);
  std::shared_lock lock(run->mutex);
  const auto rows = run->selection();
  std::vector<bool> flagged(run->data->size(), false);
  for (auto r : rows) flagged[r] = true;
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < flagged.size(); ++i)
    if (!flagged[i]) rest.push_back(i);
  LookoutOptions options;
  options.seed = run->params.seed;
  const auto sel = lookout_select(run->data->select(rows), run->data->select(rest), budget, options);
  return lookout_to_json(sel, run->data->schema);
}

namespace {

struct Groups {
  std::vector<Point> anomalies;
  std::vector<Point> inliers;
};

// The anomaly group is the whole selection, or one cluster of its summary
// when the body names a cluster_id. Inliers are every row outside the
// selection.
template <typename RunT>
Groups rule_groups(const RunT& run, const nlohmann::json& body) {
  const auto selection = run.selection();
  std::vector<std::size_t> group = selection;
  if (const auto cluster_id = optional_field<std::size_t>(body, "cluster_id")) {
    const auto k = optional_field<std::size_t>(body, "clusters").value_or(run.last_clusters);
    if (*cluster_id >= k)
      throw InvalidArgument("cluster_id must be below the cluster count", "cluster_id");
    group.clear();
    for (const auto& e : run.layout(k).entries)
      if (e.cluster == *cluster_id) group.push_back(e.row);
  }
  const auto& data = *run.data;
  std::vector<bool> flagged(data.size(), false);
  for (auto r : selection) flagged[r] = true;
  Groups g;
  g.anomalies = gather(data, group);
  for (std::size_t i = 0; i < data.size(); ++i)
    if (!flagged[i]) g.inliers.push_back(data.rows[i]);
  return g;
}

Rule parse_rule(const nlohmann::json& body, const FeatureSchema& schema) {
  if (!body.is_object() || !body.contains("rule")) throw InvalidArgument("missing field `rule`", "rule");
  Rule rule;
  try {
    rule = rule_from_json(body.at("rule"));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed rule: ") + e.what(), "rule");
  }
  rule.validate(schema);
  return rule;
}

}  // namespace

Json Service::rule_candidates(const std::string& id, const nlohmann::json& body) const {
  auto run = ready_run(id);
  const auto coverage_min = required<double>(body, "coverage_min");
  const auto purity_min = required<double>(body, "purity_min");
  if (coverage_min < 0.0 || coverage_min > 1.0)
    throw InvalidArgument("coverage_min must lie in [0, 1]", "coverage_min");
  if (purity_min < 0.0 || purity_min > 1.0)
    throw InvalidArgument("purity_min must lie in [0, 1]", "purity_min");
  std::shared_lock lock(run->mutex);
  const auto g = rule_groups(*run, body);
  Json list = Json::array();
  for (const auto& c : mine_candidates(g.anomalies, g.inliers, run->data->schema, coverage_min, purity_min)) {
    Json entry;
    entry["rule"] = rule_to_json(c.rule);
    entry["score"] = score_to_json(c.score);
    list.push_back(std::move(entry));
  }
  Json out;
  out["run_id"] = run->id;
  const auto cluster_id = optional_field<std::size_t>(body, "cluster_id");
  out["cluster_id"] = cluster_id ? Json(*cluster_id) : Json(nullptr);
  out["candidates"] = std::move(list);
  return out;
}

Json Service::rule_score(const std::string& id, const nlohmann::json& body) const {
  auto run = ready_run(id);
  std::shared_lock lock(run->mutex);
  const auto rule = parse_rule(body, run->data->schema);
  const auto g = rule_groups(*run, body);
  return Json(score_to_json(score_rule(rule, g.anomalies, g.inliers, run->data->schema)));
}

Json Service::save_rule(const nlohmann::json& body) {
  const auto run_id = required<std::string>(body, "run_id");
  auto run = ready_run(run_id);
  RuleRecord record;
  {
    std::shared_lock lock(run->mutex);
    record.rule = parse_rule(body, run->data->schema);
    record.fingerprint = dataset_fingerprint(*run->data);
  }
  record.score = score_from_json(rule_score(run_id, body));
  if (record.rule.meta.source == RuleSource::kUnspecified) record.rule.meta.source = RuleSource::kAnalyst;
  if (!record.rule.meta.created_at) record.rule.meta.created_at = now_iso8601();

  bool saved = false;
  for (int attempt = 0; attempt < 20 && !saved; ++attempt) {
    if (rule_write_.try_lock_for(std::chrono::milliseconds(50))) {
      std::lock_guard lock(rule_write_, std::adopt_lock);
      rules_.save(record);
      saved = true;
    }
  }
  if (!saved) throw Conflict("rule database is busy; retry later", "rules");
  Json out;
  out["rule"] = rule_to_json(record.rule);
  out["score"] = score_to_json(record.score);
  out["fingerprint"] = record.fingerprint;
  return out;
}

Json Service::list_rules() const {
  Json list = Json::array();
  for (const auto& r : rules_.list()) {
    Json entry;
    entry["rule"] = rule_to_json(r.rule);
    entry["score"] = score_to_json(r.score);
    entry["fingerprint"] = r.fingerprint;
    list.push_back(std::move(entry));
  }
  Json out;
  out["rules"] = std::move(list);
  return out;
}

Service::RunView Service::view(const std::string& id) const {
  auto run = ready_run(id);
  std::shared_lock lock(run->mutex);
  return {run->data.get(), &run->ensemble, &run->reports, run->selection()};
}

// ---------------------------------------------------------------- HTTP

namespace {

void send_json(httplib::Response& res, const Json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message,
                const std::string& field) {
  Json body;
  body["error"] = message;
  if (!field.empty()) body["field"] = field;
  send_json(res, body, status);
}

template <typename F>
void guarded(httplib::Response& res, F&& fn) {
  try {
    send_json(res, fn());
  } catch (const NotFound& e) {
    send_error(res, 404, e.what(), e.field());
  } catch (const Conflict& e) {
    send_error(res, 409, e.what(), e.field());
  } catch (const DataError& e) {
    send_error(res, 422, e.what(), e.field());
  } catch (const InvalidArgument& e) {
    send_error(res, 422, e.what(), e.field());
  } catch (const nlohmann::json::exception& e) {
    send_error(res, 422, std::string("malformed JSON: ") + e.what(), "");
  } catch (const std::exception& e) {
    send_error(res, 500, e.what(), "");
  }
}

nlohmann::json body_json(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  return nlohmann::json::parse(req.body);
}

std::string query(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) throw InvalidArgument(std::string("missing query parameter `") + key + "`", key);
  return req.get_param_value(key);
}

std::size_t query_count(const httplib::Request& req, const char* key, std::size_t fallback) {
  if (!req.has_param(key)) return fallback;
  return parse_number<std::size_t>(req.get_param_value(key), key);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ','))
    if (!trim(item).empty()) out.push_back(trim(item));
  return out;
}

}  // namespace

void mount_routes(httplib::Server& server, Service& service) {
  server.Post("/datasets", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      if (req.is_multipart_form_data()) {
        if (!req.has_file("csv")) throw InvalidArgument("missing multipart part `csv`", "csv");
        if (!req.has_file("schema")) throw InvalidArgument("missing multipart part `schema`", "schema");
        return service.upload_dataset(req.get_file_value("csv").content,
                                      nlohmann::json::parse(req.get_file_value("schema").content));
      }
      const auto body = body_json(req);
      return service.upload_dataset(required<std::string>(body, "csv"), body.at("schema"));
    });
  });
  server.Post("/runs", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return service.create_run(body_json(req)); });
  });
  server.Get(R"(/runs/([^/]+))", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return service.run_status(req.matches[1]); });
  });
  server.Get(R"(/runs/([^/]+)/anomalies)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::optional<std::size_t> top;
      if (req.has_param("top")) top = query_count(req, "top", 0);
      return service.anomalies(req.matches[1], top);
    });
  });
  server.Post(R"(/runs/([^/]+)/labels)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return service.import_labels(req.matches[1], body_json(req)); });
  });
  server.Get(R"(/runs/([^/]+)/summary)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return service.summary(req.matches[1], query_count(req, "clusters", 1)); });
  });
  server.Get(R"(/runs/([^/]+)/explore/histogram)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return service.explore(req.matches[1], {query(req, "feature")}); });
  });
  server.Get(R"(/runs/([^/]+)/explore/density)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return service.explore(req.matches[1], {query(req, "fx"), query(req, "fy")}); });
  });
  server.Get(R"(/runs/([^/]+)/explore/parallel)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return service.explore(req.matches[1], split_list(query(req, "features"))); });
  });
  server.Get(R"(/runs/([^/]+)/explore/lookout)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return service.lookout(req.matches[1], query_count(req, "budget", 3)); });
  });
  server.Post(R"(/runs/([^/]+)/rules/candidates)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return service.rule_candidates(req.matches[1], body_json(req)); });
  });
  server.Post(R"(/runs/([^/]+)/rules/score)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return service.rule_score(req.matches[1], body_json(req)); });
  });
  server.Post("/rules", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return service.save_rule(body_json(req)); });
  });
  server.Get("/rules", [&](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { return service.list_rules(); });
  });
}

void serve(Service& service) {
  httplib::Server server;
  mount_routes(server, service);
  const auto& c = service.config();
  std::clog << "alarm: listening on " << c.host << ":" << c.port << '\n';
  if (!server.listen(c.host, c.port))
    throw Error("cannot listen on " + c.host + ":" + std::to_string(c.port), "port");
}

}  // namespace alarmlib
