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

#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "alarm/common.hpp"
#include "alarm/dataio.hpp"
#include "alarm/explain.hpp"
#include "json.hpp"

namespace alarmlib {

// Rows of an n x |F| matrix, each L1-normalized (all-zero rows stay zero).
Matrix importance_matrix(const std::vector<ImportanceVector>& importances);

// Pairwise squared Euclidean distances between the rows of `points`.
template <typename Derived>
MatrixX<typename Derived::Scalar> squared_distances(const Eigen::MatrixBase<Derived>& points) {
  using Scalar = typename Derived::Scalar;
  const auto n = points.rows();
  MatrixX<Scalar> d(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      d(i, j) = (points.row(i) - points.row(j)).squaredNorm();
  return d;
}

// Classical MDS of a squared-distance matrix into `dims` coordinates:
// B = -1/2 J D J, top eigenpairs, coordinates v sqrt(lambda). Each axis is
// signed so its largest-magnitude loading is positive; eigenvalues below
// 1e-10 of the largest are treated as zero.
template <typename Derived>
MatrixX<typename Derived::Scalar> classical_mds(const Eigen::MatrixBase<Derived>& sq_dist,
                                                Eigen::Index dims = 2) {
  using Scalar = typename Derived::Scalar;
  const auto n = sq_dist.rows();
  const MatrixX<Scalar> centering =
      MatrixX<Scalar>::Identity(n, n) - MatrixX<Scalar>::Constant(n, n, Scalar(1) / Scalar(n));
  MatrixX<Scalar> b = Scalar(-0.5) * centering * sq_dist * centering;
  b = (b + b.transpose()).eval() * Scalar(0.5);
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> solver(b);
  const auto& values = solver.eigenvalues();    // ascending
  const auto& vectors = solver.eigenvectors();
  const Scalar top = std::max(values[n - 1], Scalar(0));
  MatrixX<Scalar> coords = MatrixX<Scalar>::Zero(n, dims);
  for (Eigen::Index a = 0; a < dims && a < n; ++a) {
    const Scalar lambda = values[n - 1 - a];
    if (!(lambda > Scalar(1e-10) * top) || lambda <= Scalar(0)) continue;
    VectorX<Scalar> v = vectors.col(n - 1 - a);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < Scalar(0)) v = -v;
    coords.col(a) = v * std::sqrt(lambda);
  }
  return coords;
}

// Agglomerative average-linkage clustering of the rows of `points` under
// Euclidean distance, cut at k clusters. Labels are canonical: clusters are
// numbered by their smallest member index.
std::vector<std::size_t> average_linkage(const Matrix& points, std::size_t k);

std::vector<std::size_t> cluster_anomalies(const std::vector<ImportanceVector>& importances,
                                           std::size_t k);

// n x 2 MDS coordinates of the normalized importance vectors.
Matrix mds_embed(const std::vector<ImportanceVector>& importances);

struct SummaryEntry {
  std::size_t row = 0;
  double x = 0.0;
  double y = 0.0;
  std::size_t cluster = 0;
  double score = 0.0;
  ImportanceVector importance;
};

struct SummaryLayout {
  std::size_t clusters = 0;
  std::vector<SummaryEntry> entries;
};

SummaryLayout summarize(std::span<const std::size_t> rows, std::span<const double> scores,
                        const std::vector<ImportanceVector>& importances, std::size_t k);

nlohmann::ordered_json summary_to_json(const SummaryLayout& layout);

struct LookoutOptions {
  std::size_t chains = 20;
  std::size_t depth = 8;
  std::uint64_t seed = 0;
};

struct LookoutSelection {
  std::size_t budget = 0;
  // All candidate real-feature pairs (schema indices, first < second).
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  // Incrimination 1 / (1 + score), candidate pairs x anomalies.
  Matrix incrimination;
  // Indices into `pairs`, in greedy selection order.
  std::vector<std::size_t> selected;
  // f(S) after each greedy step.
  std::vector<double> objective;
};

// f(S) = sum over anomalies of max_{p in S} incrimination(p, anomaly).
double lookout_objective(const Matrix& incrimination, std::span<const std::size_t> selected);

// Pair-wise incrimination scores followed by greedy budgeted selection.
LookoutSelection lookout_select(const DatasetTable& anomalies, const DatasetTable& inliers,
                                std::size_t budget, const LookoutOptions& options = {});

// Greedy maximization of lookout_objective over an incrimination matrix.
std::vector<std::size_t> greedy_select(const Matrix& incrimination, std::size_t budget,
                                       std::vector<double>* objective = nullptr);

nlohmann::ordered_json lookout_to_json(const LookoutSelection& selection,
                                       const FeatureSchema& schema);

// Raw values of selected features, split into the anomaly selection and the
// remaining rows. Backs the histogram, density and parallel-coordinate views.
struct ExploreSlice {
  std::vector<std::string> features;
  std::vector<std::size_t> anomaly_rows;
  std::vector<std::vector<Value>> anomalies;  // per row, one value per feature
  std::vector<std::vector<Value>> inliers;
};

ExploreSlice explore_slice(const DatasetTable& data, std::span<const std::size_t> anomaly_rows,
                           const std::vector<std::string>& features);

nlohmann::ordered_json slice_to_json(const ExploreSlice& slice);

}  // namespace alarmlib
