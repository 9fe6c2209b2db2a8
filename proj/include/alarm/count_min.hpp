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

#include <cstdint>
#include <vector>

#include "alarm/common.hpp"
#include "json.hpp"

namespace alarmlib {

// Count-min sketch over 64-bit keys: `rows` independent hash rows of `cols`
// counters each. count() never underestimates the number of inserts of a key.
class CountMinSketch {
 public:
  CountMinSketch() = default;
  CountMinSketch(std::size_t rows, std::size_t cols, std::uint64_t seed);

  void insert(std::uint64_t key, std::uint64_t times = 1);
  std::uint64_t count(std::uint64_t key) const;

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::uint64_t seed() const { return seed_; }

  nlohmann::json to_json() const;
  static CountMinSketch from_json(const nlohmann::json& doc);

 private:
  std::size_t cell(std::size_t row, std::uint64_t key) const;

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<std::uint64_t> table_;  // row-major rows_ x cols_
};

}  // namespace alarmlib
