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

#include "alarm/insight.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "alarm/xstream.hpp"

namespace alarmlib {

Matrix importance_matrix(const std::vector<ImportanceVector>& importances) {
  if (importances.empty()) return Matrix(0, 0);
  const auto width = static_cast<Eigen::Index>(importances.front().weights.size());
  Matrix m(static_cast<Eigen::Index>(importances.size()), width);
  for (std::size_t i = 0; i < importances.size(); ++i) {
    const auto& w = importances[i].weights;
    if (w.size() != width) throw InvalidArgument("importance vectors differ in length");
    const double total = w.cwiseAbs().sum();
    m.row(static_cast<Eigen::Index>(i)) = total > 0.0 ? (w / total).eval() : w;
  }
  return m;
}

std::vector<std::size_t> average_linkage(const Matrix& points, std::size_t k) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (k < 1 || k > n)
    throw InvalidArgument("cluster count must be between 1 and the number of points",
                          "clusters");
  Matrix dist = squared_distances(points).cwiseSqrt();
  std::vector<std::vector<std::size_t>> members(n);
  for (std::size_t i = 0; i < n; ++i) members[i] = {i};
  std::vector<char> alive(n, 1);
  for (std::size_t active = n; active > k; --active) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!alive[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!alive[j]) continue;
        const double d = dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        if (d < best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    }
    const double ni = static_cast<double>(members[bi].size());
    const double nj = static_cast<double>(members[bj].size());
    for (std::size_t t = 0; t < n; ++t) {
      if (!alive[t] || t == bi || t == bj) continue;
      const auto ti = static_cast<Eigen::Index>(t);
      const double d = (ni * dist(ti, static_cast<Eigen::Index>(bi)) +
                        nj * dist(ti, static_cast<Eigen::Index>(bj))) /
                       (ni + nj);
      dist(ti, static_cast<Eigen::Index>(bi)) = d;
      dist(static_cast<Eigen::Index>(bi), ti) = d;
    }
    members[bi].insert(members[bi].end(), members[bj].begin(), members[bj].end());
    members[bj].clear();
    alive[bj] = 0;
  }
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i)
    if (alive[i]) groups.push_back(members[i]);
  for (auto& g : groups) std::sort(g.begin(), g.end());
  std::sort(groups.begin(), groups.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  std::vector<std::size_t> labels(n);
  for (std::size_t c = 0; c < groups.size(); ++c)
    for (auto i : groups[c]) labels[i] = c;
  return labels;
}

std::vector<std::size_t> cluster_anomalies(const std::vector<ImportanceVector>& importances,
                                           std::size_t k) {
  return average_linkage(importance_matrix(importances), k);
}

Matrix mds_embed(const std::vector<ImportanceVector>& importances) {
  if (importances.size() < 2) throw InvalidArgument("MDS needs at least two points");
  return classical_mds(squared_distances(importance_matrix(importances)), 2);
}

SummaryLayout summarize(std::span<const std::size_t> rows, std::span<const double> scores,
                        const std::vector<ImportanceVector>& importances, std::size_t k) {
  if (rows.size() != importances.size() || scores.size() != importances.size())
    throw InvalidArgument("summary inputs differ in length");
  SummaryLayout layout;
  layout.clusters = k;
  const auto labels = cluster_anomalies(importances, k);
  Matrix coords = importances.size() >= 2 ? mds_embed(importances)
                                          : Matrix::Zero(static_cast<Eigen::Index>(importances.size()), 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    layout.entries.push_back(
        {rows[i], coords(ii, 0), coords(ii, 1), labels[i], scores[i], importances[i]});
  }
  return layout;
}

nlohmann::ordered_json summary_to_json(const SummaryLayout& layout) {
  nlohmann::ordered_json points = nlohmann::ordered_json::array();
  for (const auto& e : layout.entries) {
    nlohmann::ordered_json p;
    p["row"] = e.row;
    p["x"] = e.x;
    p["y"] = e.y;
    p["cluster"] = e.cluster;
    p["score"] = e.score;
    p["importances"] = importance_to_json(e.importance);
    points.push_back(std::move(p));
  }
  nlohmann::ordered_json out;
  out["clusters"] = layout.clusters;
  out["points"] = std::move(points);
  return out;
}

double lookout_objective(const Matrix& incrimination, std::span<const std::size_t> selected) {
  if (selected.empty()) return 0.0;
  double total = 0.0;
  for (Eigen::Index a = 0; a < incrimination.cols(); ++a) {
    double best = 0.0;
    for (auto p : selected)
      best = std::max(best, incrimination(static_cast<Eigen::Index>(p), a));
    total += best;
  }
  return total;
}

std::vector<std::size_t> greedy_select(const Matrix& incrimination, std::size_t budget,
                                       std::vector<double>* objective) {
  const auto n_pairs = static_cast<std::size_t>(incrimination.rows());
  std::vector<std::size_t> selected;
  std::vector<char> used(n_pairs, 0);
  Vector best_so_far = Vector::Zero(incrimination.cols());
  double current = 0.0;
  while (selected.size() < std::min(budget, n_pairs)) {
    double best_gain = -1.0;
    std::size_t best = 0;
    for (std::size_t p = 0; p < n_pairs; ++p) {
      if (used[p]) continue;
      const double gain =
          (incrimination.row(static_cast<Eigen::Index>(p)).transpose() - best_so_far)
              .cwiseMax(0.0)
              .sum();
      if (gain > best_gain) {
        best_gain = gain;
        best = p;
      }
    }
    used[best] = 1;
    selected.push_back(best);
    best_so_far = best_so_far.cwiseMax(incrimination.row(static_cast<Eigen::Index>(best)).transpose());
    current += best_gain;
    if (objective) objective->push_back(current);
  }
  return selected;
}

LookoutSelection lookout_select(const DatasetTable& anomalies, const DatasetTable& inliers,
                                std::size_t budget, const LookoutOptions& options) {
  const auto& schema = inliers.schema;
  if (!(anomalies.schema == schema))
    throw InvalidArgument("anomaly and inlier schemas differ");
  const auto reals = schema.real_indices();
  if (reals.size() < 2) throw InvalidArgument("LookOut needs at least two real features");
  if (budget < 1) throw InvalidArgument("LookOut budget must be >= 1", "budget");
  if (inliers.empty()) throw InvalidArgument("LookOut needs inliers to fit on");

  LookoutSelection sel;
  sel.budget = budget;
  for (std::size_t a = 0; a < reals.size(); ++a)
    for (std::size_t b = a + 1; b < reals.size(); ++b) sel.pairs.emplace_back(reals[a], reals[b]);

  sel.incrimination.resize(static_cast<Eigen::Index>(sel.pairs.size()),
                           static_cast<Eigen::Index>(anomalies.size()));
  DetectorParams params;
  params.chains = options.chains;
  params.depth = options.depth;
  params.projection_dims = 0;
  params.seed = options.seed;
  for (std::size_t p = 0; p < sel.pairs.size(); ++p) {
    const auto [fx, fy] = sel.pairs[p];
    FeatureSchema sub({schema[fx], schema[fy]});
    auto restrict = [&](const DatasetTable& t) {
      DatasetTable out{sub, {}, std::nullopt};
      out.rows.reserve(t.size());
      for (const auto& r : t.rows) out.rows.push_back(Point{{r.values[fx], r.values[fy]}});
      return out;
    };
    const auto ensemble = ChainEnsemble::fit(restrict(inliers), params);
    const auto sub_anomalies = restrict(anomalies);
    for (std::size_t i = 0; i < sub_anomalies.size(); ++i)
      sel.incrimination(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(i)) =
          1.0 / (1.0 + ensemble.score(sub_anomalies.rows[i]).final_score);
  }
  sel.selected = greedy_select(sel.incrimination, budget, &sel.objective);
  return sel;
}

nlohmann::ordered_json lookout_to_json(const LookoutSelection& selection,
                                       const FeatureSchema& schema) {
  nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
  for (std::size_t step = 0; step < selection.selected.size(); ++step) {
    const auto p = selection.selected[step];
    const auto [fx, fy] = selection.pairs[p];
    nlohmann::ordered_json entry;
    entry["features"] = {schema[fx].name, schema[fy].name};
    const auto row = selection.incrimination.row(static_cast<Eigen::Index>(p));
    entry["incrimination"] = std::vector<double>(row.begin(), row.end());
    entry["objective"] = selection.objective[step];
    pairs.push_back(std::move(entry));
  }
  nlohmann::ordered_json out;
  out["budget"] = selection.budget;
  out["candidate_pairs"] = selection.pairs.size();
  out["pairs"] = std::move(pairs);
  return out;
}

ExploreSlice explore_slice(const DatasetTable& data, std::span<const std::size_t> anomaly_rows,
                           const std::vector<std::string>& features) {
  if (features.empty()) throw InvalidArgument("no features requested", "features");
  std::vector<std::size_t> columns;
  for (const auto& name : features) columns.push_back(data.schema.index_of(name));
  std::vector<bool> flagged(data.size(), false);
  for (auto r : anomaly_rows) {
    if (r >= data.size()) throw InvalidArgument("row index out of range", "rows");
    flagged[r] = true;
  }
  ExploreSlice slice;
  slice.features = features;
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::vector<Value> values;
    for (auto c : columns) values.push_back(data.rows[i].values[c]);
    if (flagged[i]) {
      slice.anomaly_rows.push_back(i);
      slice.anomalies.push_back(std::move(values));
    } else {
      slice.inliers.push_back(std::move(values));
    }
  }
  return slice;
}

namespace {

nlohmann::ordered_json values_json(const std::vector<std::vector<Value>>& rows) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& row : rows) {
    nlohmann::ordered_json r = nlohmann::ordered_json::array();
    for (const auto& v : row) {
      if (const auto* d = std::get_if<double>(&v))
        r.push_back(*d);
      else
        r.push_back(std::get<std::string>(v));
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

nlohmann::ordered_json slice_to_json(const ExploreSlice& slice) {
  nlohmann::ordered_json out;
  out["features"] = slice.features;
  out["anomaly_rows"] = slice.anomaly_rows;
  out["anomalies"] = values_json(slice.anomalies);
  out["inliers"] = values_json(slice.inliers);
  return out;
}

}  // namespace alarmlib
