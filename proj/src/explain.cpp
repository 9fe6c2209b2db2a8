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

#include "alarm/explain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace alarmlib {

ChainUsage chain_usage(const ScoreReport& report, const ChainEnsemble& ensemble) {
  const auto& chains = ensemble.chains();
  if (report.per_chain.size() != chains.size())
    throw InvalidArgument("score report does not belong to this ensemble");
  ChainUsage usage;
  usage.chains.resize(ensemble.dims());
  std::vector<char> seen(ensemble.dims());
  for (std::size_t m = 0; m < chains.size(); ++m) {
    std::fill(seen.begin(), seen.end(), 0);
    const auto level = report.per_chain[m].level;
    for (std::size_t l = 0; l < level; ++l) {
      const auto f = chains[m].features[l];
      if (!seen[f]) {
        seen[f] = 1;
        usage.chains[f].push_back(m);
      }
    }
  }
  return usage;
}

ChainUsage chain_usage(const Point& point, const ChainEnsemble& ensemble) {
  return chain_usage(ensemble.score(point), ensemble);
}

ProjectedImportances projected_importances(const ScoreReport& report,
                                           const ChainEnsemble& ensemble) {
  const auto usage = chain_usage(report, ensemble);
  const auto dims = static_cast<Eigen::Index>(ensemble.dims());
  ProjectedImportances out;
  out.raw = Vector::Constant(dims, std::numeric_limits<double>::quiet_NaN());
  out.weights = Vector::Zero(dims);
  out.usage.resize(ensemble.dims());
  out.degenerate = true;
  for (Eigen::Index f = 0; f < dims; ++f) {
    const auto& used = usage.chains[static_cast<std::size_t>(f)];
    out.usage[static_cast<std::size_t>(f)] = used.size();
    if (used.empty()) continue;
    double sum = 0.0;
    for (auto m : used) sum += report.per_chain[m].score;
    out.raw[f] = sum / static_cast<double>(used.size());
    out.weights[f] = 1.0 / (1.0 + out.raw[f]);
    out.degenerate = false;
  }
  return out;
}

ProjectedImportances projected_importances(const Point& point,
                                           const ChainEnsemble& ensemble) {
  return projected_importances(ensemble.score(point), ensemble);
}

std::size_t AttributionGraph::edges() const {
  std::size_t n = 0;
  for (const auto& nb : projected_neighbors) n += nb.size();
  return n;
}

Matrix AttributionGraph::adjacency() const {
  Matrix a = Matrix::Zero(static_cast<Eigen::Index>(projected),
                          static_cast<Eigen::Index>(original));
  for (std::size_t k = 0; k < projected; ++k)
    for (auto f : projected_neighbors[k])
      a(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(f)) = 1.0;
  return a;
}

AttributionGraph build_attribution_graph(const Point& point, const HashFamily& hashes,
                                         const FeatureSchema& schema) {
  if (hashes.dims() == 0)
    throw InvalidArgument("attribution graph requires projected mode");
  check_point(point, schema);
  AttributionGraph g;
  g.projected = hashes.dims();
  g.original = schema.size();
  g.projected_neighbors.resize(g.projected);
  g.original_neighbors.resize(g.original);
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto key = schema[j].is_real() ? schema[j].name
                                         : categorical_key(schema[j].name, point.category(j));
    for (std::size_t k = 0; k < g.projected; ++k) {
      if (hashes(k, key) != 0) {
        g.projected_neighbors[k].push_back(j);
        g.original_neighbors[j].push_back(k);
      }
    }
  }
  return g;
}

RwrResult attribute(const AttributionGraph& graph, const Eigen::Ref<const Vector>& w_p,
                    const RwrOptions& options) {
  if (graph.empty()) throw InvalidArgument("attribution graph has no edges");
  if (static_cast<std::size_t>(w_p.size()) != graph.projected)
    throw InvalidArgument("projected importances do not match the graph");
  if ((w_p.array() < 0.0).any())
    throw InvalidArgument("projected importances must be nonnegative");
  const double mass = w_p.sum();
  if (!(mass > 0.0)) throw InvalidArgument("projected importances are all zero");
  const Vector restart = w_p / mass;
  const double a = options.alpha;

  const auto n_orig = static_cast<Eigen::Index>(graph.original);
  RwrResult r;
  r.original = Vector::Constant(n_orig, 1.0 / static_cast<double>(n_orig));
  r.projected = Vector::Zero(static_cast<Eigen::Index>(graph.projected));
  Vector next(n_orig);
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    for (std::size_t k = 0; k < graph.projected; ++k) {
      const auto& nb = graph.projected_neighbors[k];
      double avg = 0.0;
      for (auto f : nb) avg += r.original[static_cast<Eigen::Index>(f)];
      if (!nb.empty()) avg /= static_cast<double>(nb.size());
      const auto ki = static_cast<Eigen::Index>(k);
      r.projected[ki] = (1.0 - a) * avg + a * restart[ki];
    }
    for (std::size_t f = 0; f < graph.original; ++f) {
      const auto& nb = graph.original_neighbors[f];
      double avg = 0.0;
      for (auto k : nb) avg += r.projected[static_cast<Eigen::Index>(k)];
      if (!nb.empty()) avg /= static_cast<double>(nb.size());
      next[static_cast<Eigen::Index>(f)] = (1.0 - a) * avg;
    }
    const double total = next.sum();
    if (total > 0.0) next /= total;
    const double residual = (next - r.original).lpNorm<1>();
    r.original = next;
    r.residuals.push_back(residual);
    r.iterations = it + 1;
    if (residual < options.tolerance) {
      r.converged = true;
      break;
    }
  }
  return r;
}

std::vector<std::size_t> ImportanceVector::ranking() const {
  std::vector<std::size_t> order(features.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return weights[static_cast<Eigen::Index>(a)] > weights[static_cast<Eigen::Index>(b)];
  });
  return order;
}

ImportanceVector explain(const Point& point, const ScoreReport& report,
                         const ChainEnsemble& ensemble, const RwrOptions& options) {
  const auto& schema = ensemble.schema();
  const auto proj = projected_importances(report, ensemble);
  ImportanceVector out;
  out.features = schema.names();
  const auto n = static_cast<Eigen::Index>(schema.size());

  if (!ensemble.params().projected()) {
    out.weights = Vector::Zero(n);
    const auto& layout = ensemble.layout();
    for (Eigen::Index d = 0; d < proj.weights.size(); ++d)
      out.weights[static_cast<Eigen::Index>(layout.feature_of(static_cast<std::size_t>(d)))] +=
          proj.weights[d];
    const double total = out.weights.sum();
    if (total > 0.0) out.weights /= total;
    return out;
  }

  Vector w = proj.weights;
  const double total = w.sum();
  if (total > 0.0) {
    w /= total;
  } else {
    w.setConstant(1.0 / static_cast<double>(w.size()));
  }
  const auto graph = build_attribution_graph(point, ensemble.hashes(), schema);
  if (graph.empty()) {
    out.weights = Vector::Zero(n);
    return out;
  }
  out.weights = attribute(graph, w, options).original;
  return out;
}

ImportanceVector explain(const Point& point, const ChainEnsemble& ensemble,
                         const RwrOptions& options) {
  return explain(point, ensemble.score(point), ensemble, options);
}

nlohmann::ordered_json importance_to_json(const ImportanceVector& importance) {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (auto i : importance.ranking())
    out[importance.features[i]] = importance.weights[static_cast<Eigen::Index>(i)];
  return out;
}

ImportanceVector importance_from_json(const nlohmann::json& doc,
                                      const FeatureSchema& schema) {
  if (!doc.is_object()) throw DataError("importance vector must be a JSON object");
  ImportanceVector out;
  out.features = schema.names();
  out.weights = Vector::Zero(static_cast<Eigen::Index>(schema.size()));
  for (const auto& [name, value] : doc.items()) {
    const auto j = schema.find(name);
    if (!j) throw DataError("unknown feature in importance vector: " + name, name);
    if (!value.is_number()) throw DataError("importance weight must be a number", name);
    out.weights[static_cast<Eigen::Index>(*j)] = value.get<double>();
  }
  return out;
}

}  // namespace alarmlib
