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
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace alarmlib {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Rng = std::mt19937_64;

// Base of every error raised by the library. `field` names the offending
// input (feature, parameter, JSON key) when there is one.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, std::string field = {})
      : std::runtime_error(what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// Malformed or schema-violating input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Bad parameters or calls made in the wrong state.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Lookup of an unknown id (dataset, run, feature).
class NotFound : public Error {
 public:
  using Error::Error;
};

// 64-bit FNV-1a over raw bytes, used for fingerprints and seeded hashing.
inline std::uint64_t fnv1a64(const void* data, std::size_t size,
                             std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace alarmlib
