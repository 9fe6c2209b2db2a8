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

#include <string>
#include <vector>

#include "alarm/common.hpp"
#include "alarm/dataio.hpp"
#include "alarm/hashing.hpp"
#include "alarm/xstream.hpp"
#include "json.hpp"

namespace alarmlib {

// For every sketch dimension f, the chains that halve on f at or above the
// level where the point was scored.
struct ChainUsage {
  std::vector<std::vector<std::size_t>> chains;  // indexed by dimension
};

ChainUsage chain_usage(const ScoreReport& report, const ChainEnsemble& ensemble);
ChainUsage chain_usage(const Point& point, const ChainEnsemble& ensemble);

struct ProjectedImportances {
  // Mean per-chain score over the chains using f; NaN where unused.
  Vector raw;
  // 1 / (1 + raw) for used dimensions, 0 otherwise. Larger = more important.
  Vector weights;
  std::vector<std::size_t> usage;
  // True when no chain used any dimension.
  bool degenerate = false;
};

ProjectedImportances projected_importances(const ScoreReport& report,
                                           const ChainEnsemble& ensemble);
ProjectedImportances projected_importances(const Point& point,
                                           const ChainEnsemble& ensemble);

// Bipartite graph between K projected dimensions and the original features.
// Edge (k, F) exists iff h_k(F) != 0 (real F) or h_k(F ⊕ x[F]) != 0.
struct AttributionGraph {
  std::size_t projected = 0;
  std::size_t original = 0;
  std::vector<std::vector<std::size_t>> projected_neighbors;
  std::vector<std::vector<std::size_t>> original_neighbors;

  std::size_t edges() const;
  bool empty() const { return edges() == 0; }
  // Binary K x |F| adjacency.
  Matrix adjacency() const;
};

AttributionGraph build_attribution_graph(const Point& point, const HashFamily& hashes,
                                         const FeatureSchema& schema);

struct RwrOptions {
  double alpha = 0.15;  // restart probability
  double tolerance = 1e-9;
  std::size_t max_iterations = 500;
};

struct RwrResult {
  Vector original;   // pi_o, sums to 1
  Vector projected;  // pi_p at the last iteration
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> residuals;  // L1 change of pi_o per iteration
};

// Random walk with restart on the bipartite graph, restarting to the
// projected importances:
//   pi_p <- (1 - a) P pi_o + a w_p,   pi_o <- normalize((1 - a) Q pi_p)
// where P averages over each projected node's neighbors and Q over each
// original node's neighbors. Throws on an empty graph or all-zero w_p.
RwrResult attribute(const AttributionGraph& graph, const Eigen::Ref<const Vector>& w_p,
                    const RwrOptions& options = {});

// Per-feature importances aligned with the schema; sums to 1 unless all-zero.
struct ImportanceVector {
  std::vector<std::string> features;
  Vector weights;

  std::size_t size() const { return features.size(); }
  // Feature indices by descending weight, ties by feature order.
  std::vector<std::size_t> ranking() const;
};

ImportanceVector explain(const Point& point, const ChainEnsemble& ensemble,
                         const RwrOptions& options = {});
ImportanceVector explain(const Point& point, const ScoreReport& report,
                         const ChainEnsemble& ensemble, const RwrOptions& options = {});

// {"feature": weight, ...} in descending weight order.
nlohmann::ordered_json importance_to_json(const ImportanceVector& importance);
ImportanceVector importance_from_json(const nlohmann::json& doc,
                                      const FeatureSchema& schema);

}  // namespace alarmlib
