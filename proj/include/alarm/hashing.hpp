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
#include <string>
#include <string_view>

#include "alarm/common.hpp"
#include "alarm/dataio.hpp"

namespace alarmlib {

// Separator placed between a categorical feature name and its value before
// hashing.
inline constexpr char kConcatSeparator = '\x1f';

std::string categorical_key(std::string_view feature, std::string_view value);

// K seeded sparse sign hashes h_k : string -> {+1 (1/6), -1 (1/6), 0 (2/3)}.
class HashFamily {
 public:
  HashFamily() = default;
  HashFamily(std::size_t dims, std::uint64_t seed) : dims_(dims), seed_(seed) {}

  std::size_t dims() const { return dims_; }
  std::uint64_t seed() const { return seed_; }

  int operator()(std::size_t k, std::string_view key) const;

 private:
  std::size_t dims_ = 0;
  std::uint64_t seed_ = 0;
};

// Hashed sparse random projection of a normalized point:
//   s[k] = sum_{real F} h_k(F) x[F] + sum_{categorical F} h_k(F ⊕ x[F]).
Vector project(const Point& point, const HashFamily& hashes,
               const FeatureSchema& schema);

}  // namespace alarmlib
