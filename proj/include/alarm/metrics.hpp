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

#include "alarm/dataio.hpp"

namespace alarmlib {

// NDCG with log2 discount. Features are ranked by descending predicted
// weight (ties by feature order) and graded by the true weights. An all-zero
// truth gives 1.
double ndcg(std::span<const double> predicted, std::span<const double> truth);

// Rank-based AUROC for scores where LOWER means more anomalous; ties count
// one half. Throws unless both classes are present.
double auroc(std::span<const double> scores, std::span<const Label> labels);

}  // namespace alarmlib
