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

#include "alarm/count_min.hpp"

#include <algorithm>
#include <limits>

namespace alarmlib {

CountMinSketch::CountMinSketch(std::size_t rows, std::size_t cols, std::uint64_t seed)
    : rows_(rows), cols_(cols), seed_(seed), table_(rows * cols, 0) {
  if (rows == 0 || cols == 0)
    throw InvalidArgument("count-min sketch needs rows >= 1 and cols >= 1");
}

std::size_t CountMinSketch::cell(std::size_t row, std::uint64_t key) const {
  const std::uint64_t h = mix64(key ^ mix64(seed_ + 0x51ed27ULL * (row + 1)));
  return row * cols_ + static_cast<std::size_t>(h % cols_);
}

void CountMinSketch::insert(std::uint64_t key, std::uint64_t times) {
  for (std::size_t r = 0; r < rows_; ++r) table_[cell(r, key)] += times;
}

std::uint64_t CountMinSketch::count(std::uint64_t key) const {
  if (rows_ == 0) return 0;
  std::uint64_t best = std::numeric_limits<std::uint64_t>::max();
  for (std::size_t r = 0; r < rows_; ++r) best = std::min(best, table_[cell(r, key)]);
  return best;
}

nlohmann::json CountMinSketch::to_json() const {
  return {{"rows", rows_}, {"cols", cols_}, {"seed", seed_}, {"table", table_}};
}

CountMinSketch CountMinSketch::from_json(const nlohmann::json& doc) {
  CountMinSketch cms(doc.at("rows").get<std::size_t>(), doc.at("cols").get<std::size_t>(),
                     doc.at("seed").get<std::uint64_t>());
  auto table = doc.at("table").get<std::vector<std::uint64_t>>();
  if (table.size() != cms.table_.size())
    throw DataError("count-min table size does not match rows x cols", "table");
  cms.table_ = std::move(table);
  return cms;
}

}  // namespace alarmlib
