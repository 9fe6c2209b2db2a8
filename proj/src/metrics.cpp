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

#include "alarm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace alarmlib {
namespace {

double dcg(std::span<const std::size_t> order, std::span<const double> rel) {
  double sum = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i)
    sum += rel[order[i]] / std::log2(static_cast<double>(i) + 2.0);
  return sum;
}

std::vector<std::size_t> descending(std::span<const double> w) {
  std::vector<std::size_t> order(w.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
  return order;
}

}  // namespace

double ndcg(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.size() != truth.size())
    throw InvalidArgument("ndcg: predicted and truth lengths differ");
  if (predicted.empty()) throw InvalidArgument("ndcg: empty input");
  const double ideal = dcg(descending(truth), truth);
  if (ideal == 0.0) return 1.0;
  return dcg(descending(predicted), truth) / ideal;
}

double auroc(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size())
    throw InvalidArgument("auroc: scores and labels lengths differ");
  std::size_t n_pos = 0;
  for (auto l : labels) n_pos += l == Label::kAnomaly;
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw InvalidArgument("auroc: both classes are required");

  // Rank by anomaly-ness (negated score), average ranks over ties.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return -scores[a] < -scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && -scores[order[j]] == -scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i) + static_cast<double>(j) + 1.0) / 2.0;
    for (std::size_t t = i; t < j; ++t)
      if (labels[order[t]] == Label::kAnomaly) rank_sum += avg_rank;
    i = j;
  }
  const double pos = static_cast<double>(n_pos);
  const double u = rank_sum - pos * (pos + 1.0) / 2.0;
  return u / (pos * static_cast<double>(n_neg));
}

}  // namespace alarmlib
