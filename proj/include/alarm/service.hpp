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

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "alarm/dataio.hpp"
#include "alarm/explain.hpp"
#include "alarm/insight.hpp"
#include "alarm/rules.hpp"
#include "alarm/xstream.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace alarmlib {

// State conflicts: rule-db contention, or a run that is not ready yet.
class Conflict : public Error {
 public:
  using Error::Error;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string data_dir = "alarm-data";
  std::string rule_db;  // defaults to <data_dir>/rules.jsonl
  DetectorParams detector;
  std::string simulator_preset = "desk";
  std::size_t top_k = 50;

  std::string rule_db_path() const;
  // Creates the data directory and checks it and the rule db are writable.
  void prepare() const;
};

// `key = value` lines; `#` starts a comment. Unknown keys are rejected.
void apply_config_text(ServiceConfig& config, const std::string& text,
                       const std::string& origin = "config");
void apply_config_file(ServiceConfig& config, const std::string& path);
// ALARM_<KEY> variables override file values, e.g. ALARM_PORT, ALARM_DATA_DIR.
void apply_env_overrides(ServiceConfig& config,
                         const std::function<const char*(const char*)>& getenv);
std::vector<std::string> config_keys();

using Json = nlohmann::ordered_json;

// Everything the HTTP routes do, callable without a socket. Each method
// returns the JSON body of the matching route.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  const ServiceConfig& config() const { return config_; }

  // POST /datasets
  Json upload_dataset(const std::string& csv, const nlohmann::json& schema);
  const DatasetTable& dataset(const std::string& id) const;

  // POST /runs. With "wait": true the fit happens before returning;
  // otherwise it runs in the background and GET /runs/{id} reports progress.
  Json create_run(const nlohmann::json& body);
  // GET /runs/{id}
  Json run_status(const std::string& id) const;
  // Blocks until the run leaves the queued/running states.
  Json wait_run(const std::string& id) const;

  // GET /runs/{id}/anomalies?top=k
  Json anomalies(const std::string& id, std::optional<std::size_t> top) const;
  // POST /runs/{id}/labels
  Json import_labels(const std::string& id, const nlohmann::json& body);
  // GET /runs/{id}/summary?clusters=k
  Json summary(const std::string& id, std::size_t clusters) const;
  // GET /runs/{id}/explore/...
  Json explore(const std::string& id, const std::vector<std::string>& features) const;
  Json lookout(const std::string& id, std::size_t budget) const;
  // POST /runs/{id}/rules/candidates
  Json rule_candidates(const std::string& id, const nlohmann::json& body) const;
  // POST /runs/{id}/rules/score
  Json rule_score(const std::string& id, const nlohmann::json& body) const;
  // POST /rules and GET /rules
  Json save_rule(const nlohmann::json& body);
  Json list_rules() const;

  // Library objects behind a finished run, for callers that want to compare.
  struct RunView {
    const DatasetTable* data;
    const ChainEnsemble* ensemble;
    const std::vector<ScoreReport>* reports;
    std::vector<std::size_t> selection;
  };
  RunView view(const std::string& id) const;

 private:
  struct Run;
  std::shared_ptr<Run> find_run(const std::string& id) const;
  std::shared_ptr<Run> ready_run(const std::string& id) const;
  void fit_run(const std::shared_ptr<Run>& run);
  void reload();

  ServiceConfig config_;
  RuleDB rules_;
  std::timed_mutex rule_write_;
  mutable std::shared_mutex mutex_;  // guards datasets_ and runs_
  std::map<std::string, std::shared_ptr<const DatasetTable>> datasets_;
  std::map<std::string, std::shared_ptr<Run>> runs_;
  std::mutex jobs_mutex_;
  std::vector<std::thread> jobs_;
};

// Registers every route on `server`. Errors map to 404 (unknown id), 422
// (invalid input) and 409 (conflict) with {"error", "field"} bodies.
void mount_routes(httplib::Server& server, Service& service);

// Blocks serving HTTP until the server is stopped.
void serve(Service& service);

}  // namespace alarmlib
