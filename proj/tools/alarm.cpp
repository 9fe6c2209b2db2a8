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

// Command-line front end: simulate, detect, explain, eval, rules, serve.

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"
#include "alarm/explain.hpp"
#include "alarm/metrics.hpp"
#include "alarm/rules.hpp"
#include "alarm/service.hpp"
#include "alarm/simulate.hpp"
#include "alarm/xstream.hpp"

using namespace alarmlib;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

struct DataArgs {
  std::string data;
  std::string schema;
};

struct DetectorArgs {
  std::optional<std::size_t> chains, depth, projection_dims;
  std::optional<std::string> counter;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key = value configuration file");
  cmd->add_option("--seed", c.seed, "random seed");
}

void add_data(CLI::App* cmd, DataArgs& d) {
  cmd->add_option("--data", d.data, "CSV file")->required();
  cmd->add_option("--schema", d.schema, "schema sidecar (default: <data>.schema.json)");
}

void add_detector(CLI::App* cmd, DetectorArgs& d) {
  cmd->add_option("--chains", d.chains, "number of half-space chains");
  cmd->add_option("--depth", d.depth, "levels per chain");
  cmd->add_option("--projection-dims", d.projection_dims, "hashed projection size, 0 = none");
  cmd->add_option("--counter", d.counter, "exact or countmin")->check(CLI::IsMember({"exact", "countmin"}));
}

ServiceConfig load_config(const Common& c) {
  ServiceConfig config;
  if (!c.config_path.empty()) apply_config_file(config, c.config_path);
  apply_env_overrides(config, [](const char* name) { return std::getenv(name); });
  if (c.seed) config.detector.seed = *c.seed;
  return config;
}

DetectorParams detector_params(const ServiceConfig& config, const DetectorArgs& d) {
  DetectorParams p = config.detector;
  if (d.chains) p.chains = *d.chains;
  if (d.depth) p.depth = *d.depth;
  if (d.projection_dims) p.projection_dims = *d.projection_dims;
  if (d.counter) p.counter = *d.counter == "exact" ? CounterMode::kExact : CounterMode::kCountMin;
  return p;
}

std::string schema_path(const DataArgs& d) {
  if (!d.schema.empty()) return d.schema;
  auto base = d.data;
  if (base.size() > 4 && base.ends_with(".csv")) base.resize(base.size() - 4);
  return base + ".schema.json";
}

DatasetTable load(const DataArgs& d) { return load_csv(d.data, schema_path(d)); }

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path, path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what(), path);
  }
}

template <typename J>
void emit(const J& doc, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << doc.dump(2) << '\n';
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw Error("cannot write " + out_path, out_path);
  out << doc.dump(2) << '\n';
}

std::vector<std::size_t> parse_rows(const std::string& text, std::size_t n) {
  std::vector<std::size_t> rows;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    std::size_t r = 0;
    try {
      r = std::stoull(item);
    } catch (const std::exception&) {
      throw InvalidArgument("`" + item + "` is not a row index", "rows");
    }
    if (r >= n) throw InvalidArgument("row " + item + " is out of range", "rows");
    rows.push_back(r);
  }
  return rows;
}

std::vector<std::size_t> labelled_anomalies(const DatasetTable& t) {
  std::vector<std::size_t> rows;
  if (!t.labels) throw InvalidArgument("data has no label column; pass --rows", "rows");
  for (std::size_t i = 0; i < t.size(); ++i)
    if ((*t.labels)[i] == Label::kAnomaly) rows.push_back(i);
  return rows;
}

// Reads the `row,score` CSV written by `detect`.
std::vector<double> read_scores(const std::string& path, std::size_t n) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path, "scores");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const auto records = parse_csv_records(buffer.str());
  if (records.empty() || records[0] != std::vector<std::string>{"row", "score"})
    throw DataError(path + ": expected header row,score", "scores");
  std::vector<double> scores(n, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto row = std::stoull(records[i].at(0));
    if (row >= n) throw DataError(path + ": row " + records[i][0] + " out of range", "scores");
    scores[row] = std::stod(records[i].at(1));
  }
  for (std::size_t i = 0; i < n; ++i)
    if (std::isnan(scores[i])) throw DataError(path + ": no score for row " + std::to_string(i), "scores");
  return scores;
}

void print_error(const std::string& message, const std::string& field) {
  nlohmann::ordered_json line;
  line["error"] = message;
  if (!field.empty()) line["field"] = field;
  std::cerr << line.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anomaly detection, explanation, simulation and rule design"};
  app.require_subcommand(1);

  // simulate
  Common sim_c;
  DataArgs sim_d;
  std::size_t sim_m = 1000, sim_k = 100;
  double sim_eps = 0.5;
  std::optional<std::string> sim_preset;
  std::optional<std::size_t> sim_epochs;
  double sim_fraction = 1.0 / 3.0;
  std::string sim_out;
  auto* sim = app.add_subcommand("simulate", "train the generator on normal data and synthesize a labelled bundle");
  add_common(sim, sim_c);
  add_data(sim, sim_d);
  sim->add_option("--m", sim_m, "synthetic normal points");
  sim->add_option("--k", sim_k, "synthetic anomalies");
  sim->add_option("--epsilon", sim_eps, "threshold scale");
  sim->add_option("--preset", sim_preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  sim->add_option("--epochs", sim_epochs, "override the preset's epoch count");
  sim->add_option("--fraction", sim_fraction, "fraction of features inflated per anomaly");
  sim->add_option("--out", sim_out, "output prefix: <out>.csv, <out>.schema.json, <out>.importances.json")
      ->required();

  // detect
  Common det_c;
  DataArgs det_d;
  DetectorArgs det_p;
  std::string det_out, det_model;
  auto* det = app.add_subcommand("detect", "fit the detector and write per-row scores (lower = more anomalous)");
  add_common(det, det_c);
  add_data(det, det_d);
  add_detector(det, det_p);
  det->add_option("--out", det_out, "scores CSV (row,score)")->required();
  det->add_option("--save-model", det_model, "write the fitted ensemble as JSON");

  // explain
  Common exp_c;
  DataArgs exp_d;
  DetectorArgs exp_p;
  std::string exp_out, exp_model, exp_rows;
  std::optional<std::size_t> exp_top;
  auto* exp = app.add_subcommand("explain", "write feature importances for anomalous rows");
  add_common(exp, exp_c);
  add_data(exp, exp_d);
  add_detector(exp, exp_p);
  exp->add_option("--model", exp_model, "fitted ensemble JSON (default: fit now)");
  exp->add_option("--rows", exp_rows, "comma-separated row indices");
  exp->add_option("--top", exp_top, "explain the k lowest-scoring rows");
  exp->add_option("--out", exp_out, "importances JSON")->required();

  // eval
  Common ev_c;
  DataArgs ev_d;
  std::string ev_scores, ev_pred, ev_truth, ev_out;
  auto* ev = app.add_subcommand("eval", "AUROC of scores and NDCG of importances against ground truth");
  add_common(ev, ev_c);
  add_data(ev, ev_d);
  ev->add_option("--scores", ev_scores, "scores CSV from detect");
  ev->add_option("--importances", ev_pred, "importances JSON from explain");
  ev->add_option("--truth", ev_truth, "ground-truth importances JSON from simulate");
  ev->add_option("--out", ev_out, "report JSON (default: stdout)");

  // rules
  auto* rules = app.add_subcommand("rules", "mine or score rules for a group of anomalies");
  rules->require_subcommand(1);
  Common rm_c, rs_c;
  DataArgs rm_d, rs_d;
  std::string rm_rows, rs_rows, rm_out, rs_out, rs_rule;
  double rm_cov = 0.8, rm_pur = 0.8;
  auto* mine = rules->add_subcommand("mine", "candidate rules meeting coverage and purity minima");
  add_common(mine, rm_c);
  add_data(mine, rm_d);
  mine->add_option("--rows", rm_rows, "anomaly rows (default: label column)");
  mine->add_option("--coverage", rm_cov, "minimum coverage");
  mine->add_option("--purity", rm_pur, "minimum purity");
  mine->add_option("--out", rm_out, "output JSON (default: stdout)");
  auto* score_cmd = rules->add_subcommand("score", "coverage and purity of one rule");
  add_common(score_cmd, rs_c);
  add_data(score_cmd, rs_d);
  score_cmd->add_option("--rule", rs_rule, "rule JSON file")->required();
  score_cmd->add_option("--rows", rs_rows, "anomaly rows (default: label column)");
  score_cmd->add_option("--out", rs_out, "output JSON (default: stdout)");

  // serve
  Common sv_c;
  std::optional<std::string> sv_host, sv_dir;
  std::optional<int> sv_port;
  auto* sv = app.add_subcommand("serve", "start the HTTP service");
  add_common(sv, sv_c);
  sv->add_option("--host", sv_host, "bind address");
  sv->add_option("--port", sv_port, "port");
  sv->add_option("--data-dir", sv_dir, "data directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error(e.what(), "");
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  try {
    if (sim->parsed()) {
      const auto config = load_config(sim_c);
      const auto preset = sim_preset.value_or(config.simulator_preset);
      VaeConfig vc = preset == "paper" ? VaeConfig::paper() : VaeConfig::desk();
      if (sim_epochs) vc.epochs = *sim_epochs;
      vc.seed = config.detector.seed;
      auto normals = load(sim_d);
      if (normals.labels) {
        std::vector<std::size_t> keep;
        for (std::size_t i = 0; i < normals.size(); ++i)
          if ((*normals.labels)[i] == Label::kInlier) keep.push_back(i);
        normals = normals.select(keep);
      }
      const auto model = train_genmodel(normals, vc);
      InflationPolicy policy;
      policy.fraction = sim_fraction;
      const auto bundle = synthesize(model, sim_m, sim_k, sim_eps, policy, config.detector.seed);
      write_bundle(bundle, sim_out + ".csv", sim_out + ".schema.json", sim_out + ".importances.json");
      nlohmann::ordered_json report;
      report["normals"] = bundle.normals.size();
      report["anomalies"] = bundle.anomalies.size();
      report["candidates"] = bundle.candidates;
      report["tau"] = bundle.tau;
      report["final_loss"] = model.loss_history.empty() ? 0.0 : model.loss_history.back();
      report["csv"] = sim_out + ".csv";
      report["schema"] = sim_out + ".schema.json";
      report["importances"] = sim_out + ".importances.json";
      std::cout << report.dump(2) << '\n';
    } else if (det->parsed()) {
      const auto config = load_config(det_c);
      const auto data = load(det_d);
      const auto ensemble = fit(data, detector_params(config, det_p));
      const auto scores = final_scores(score_batch(data, ensemble));
      std::ofstream out(det_out);
      if (!out) throw Error("cannot write " + det_out, "out");
      out << "row,score\n";
      for (std::size_t i = 0; i < scores.size(); ++i) out << i << ',' << format_real(scores[i]) << '\n';
      if (!det_model.empty()) {
        std::ofstream m(det_model);
        if (!m) throw Error("cannot write " + det_model, "save-model");
        m << ensemble.to_json().dump() << '\n';
      }
    } else if (exp->parsed()) {
      const auto config = load_config(exp_c);
      const auto data = load(exp_d);
      const auto ensemble = exp_model.empty() ? fit(data, detector_params(config, exp_p))
                                              : ChainEnsemble::from_json(read_json(exp_model));
      if (!(ensemble.schema() == data.schema))
        throw DataError("model schema does not match the data", "model");
      const auto reports = score_batch(data, ensemble);
      std::vector<std::size_t> rows;
      if (!exp_rows.empty()) {
        rows = parse_rows(exp_rows, data.size());
      } else if (exp_top || !data.labels) {
        const auto scores = final_scores(reports);
        rows.resize(data.size());
        std::iota(rows.begin(), rows.end(), 0);
        std::stable_sort(rows.begin(), rows.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
        rows.resize(std::min(rows.size(), exp_top.value_or(config.top_k)));
      } else {
        rows = labelled_anomalies(data);
      }
      nlohmann::ordered_json out = nlohmann::ordered_json::array();
      for (auto r : rows) {
        nlohmann::ordered_json entry;
        entry["row"] = r;
        entry["weights"] = importance_to_json(explain(data.rows[r], reports[r], ensemble));
        out.push_back(std::move(entry));
      }
      emit(out, exp_out);
    } else if (ev->parsed()) {
      load_config(ev_c);
      const auto data = load(ev_d);
      nlohmann::ordered_json report;
      if (!ev_scores.empty()) {
        if (!data.labels) throw InvalidArgument("AUROC needs a label column", "data");
        const auto scores = read_scores(ev_scores, data.size());
        report["auroc"] = auroc(scores, *data.labels);
      }
      if (!ev_pred.empty() || !ev_truth.empty()) {
        if (ev_pred.empty() || ev_truth.empty())
          throw InvalidArgument("NDCG needs both --importances and --truth", "importances");
        const auto pred = read_importances(read_json(ev_pred), data.schema);
        const auto truth = read_importances(read_json(ev_truth), data.schema);
        std::map<std::size_t, Vector> by_row;
        for (const auto& [row, w] : pred) by_row[row] = w;
        double total = 0.0;
        std::size_t n = 0;
        for (const auto& [row, t] : truth) {
          auto it = by_row.find(row);
          if (it == by_row.end()) continue;
          total += ndcg(std::span<const double>(it->second.data(), it->second.size()),
                        std::span<const double>(t.data(), t.size()));
          ++n;
        }
        if (n == 0) throw InvalidArgument("no rows in common between importances and truth", "importances");
        report["ndcg"] = total / static_cast<double>(n);
        report["ndcg_rows"] = n;
      }
      if (report.empty()) throw InvalidArgument("nothing to evaluate; pass --scores and/or --importances", "scores");
      emit(report, ev_out);
    } else if (mine->parsed()) {
      load_config(rm_c);
      const auto data = load(rm_d);
      const auto rows = rm_rows.empty() ? labelled_anomalies(data) : parse_rows(rm_rows, data.size());
      std::vector<bool> flagged(data.size(), false);
      for (auto r : rows) flagged[r] = true;
      std::vector<Point> anomalies, inliers;
      for (std::size_t i = 0; i < data.size(); ++i) (flagged[i] ? anomalies : inliers).push_back(data.rows[i]);
      nlohmann::ordered_json out = nlohmann::ordered_json::array();
      for (const auto& c : mine_candidates(anomalies, inliers, data.schema, rm_cov, rm_pur)) {
        nlohmann::ordered_json entry;
        entry["rule"] = rule_to_json(c.rule);
        entry["score"] = score_to_json(c.score);
        out.push_back(std::move(entry));
      }
      emit(out, rm_out);
    } else if (score_cmd->parsed()) {
      load_config(rs_c);
      const auto data = load(rs_d);
      const auto rule = rule_from_json(read_json(rs_rule));
      rule.validate(data.schema);
      const auto rows = rs_rows.empty() ? labelled_anomalies(data) : parse_rows(rs_rows, data.size());
      std::vector<bool> flagged(data.size(), false);
      for (auto r : rows) flagged[r] = true;
      std::vector<Point> anomalies, inliers;
      for (std::size_t i = 0; i < data.size(); ++i) (flagged[i] ? anomalies : inliers).push_back(data.rows[i]);
      emit(score_to_json(score_rule(rule, anomalies, inliers, data.schema)), rs_out);
    } else if (sv->parsed()) {
      auto config = load_config(sv_c);
      if (sv_host) config.host = *sv_host;
      if (sv_port) config.port = *sv_port;
      if (sv_dir) config.data_dir = *sv_dir;
      Service service(config);
      serve(service);
    }
  } catch (const Error& e) {
    print_error(e.what(), e.field());
    return 1;
  } catch (const std::exception& e) {
    print_error(e.what(), "");
    return 1;
  }
  return 0;
}
