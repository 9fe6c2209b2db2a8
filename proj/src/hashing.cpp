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

#include "alarm/hashing.hpp"

namespace alarmlib {

std::string categorical_key(std::string_view feature, std::string_view value) {
  std::string key;
  key.reserve(feature.size() + value.size() + 1);
  key.append(feature);
  key.push_back(kConcatSeparator);
  key.append(value);
  return key;
}

int HashFamily::operator()(std::size_t k, std::string_view key) const {
  std::uint64_t h = mix64(seed_ ^ mix64(static_cast<std::uint64_t>(k) + 1));
  h = fnv1a64(key.data(), key.size(), h);
  switch (mix64(h) % 6) {
    case 0:
      return 1;
    case 1:
      return -1;
    default:
      return 0;
  }
}

Vector project(const Point& point, const HashFamily& hashes,
               const FeatureSchema& schema) {
  const auto dims = static_cast<Eigen::Index>(hashes.dims());
  Vector s = Vector::Zero(dims);
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto& f = schema[j];
    if (f.is_real()) {
      const double x = point.real(j);
      for (Eigen::Index k = 0; k < dims; ++k)
        s[k] += hashes(static_cast<std::size_t>(k), f.name) * x;
    } else {
      const auto key = categorical_key(f.name, point.category(j));
      for (Eigen::Index k = 0; k < dims; ++k)
        s[k] += hashes(static_cast<std::size_t>(k), key);
    }
  }
  return s;
}

}  // namespace alarmlib
