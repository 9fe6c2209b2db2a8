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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "alarm/common.hpp"
#include "alarm/dataio.hpp"
#include "alarm/mixture.hpp"
#include "alarm/vae.hpp"
#include "json.hpp"

namespace alarmlib {

// Per-feature marginals of the normalized training normals.
struct MarginalModels {
  struct Real {
    Mixture mixture;
    double min = 0.0;
    double max = 0.0;
  };
  struct Categorical {
    std::vector<std::string> values;     // observed values, schema order
    std::vector<std::size_t> counts;
    std::string rarest;                  // fewest occurrences, ties by schema order
  };
  // Exactly one of the two is set per feature.
  std::vector<std::optional<Real>> real;
  std::vector<std::optional<Categorical>> categorical;

  // Categoricals with a single observed value cannot be inflated.
  bool inflatable(std::size_t feature) const;
};

MarginalModels fit_marginals(const DatasetTable& normalized, std::size_t max_components = 5);

// Encoder/decoder pair plus the plumbing that maps raw points to the dense
// vectors it models: min-max normalized reals and one-hot categoricals.
struct GenModel {
  Vae vae;
  FeatureSchema schema;
  NormalizationState normalizer;
  OneHotLayout layout;
  MarginalModels marginals;
  std::vector<double> loss_history;

  // Raw point to model space.
  Vector encode(const Point& raw) const;
  // Model-space vector to a raw point (categorical blocks by arg-max).
  Point decode(const Eigen::Ref<const Vector>& encoded) const;
};

GenModel train_genmodel(const DatasetTable& normals, const VaeConfig& config);

// log p(x | z) of a model-space vector.
double log_px_given_z(const GenModel& model, const Eigen::Ref<const Vector>& x,
                      const Eigen::Ref<const Vector>& z);

struct SampledNormals {
  Matrix encoded;  // model space, one column per point
  Matrix latents;  // one column per point
  std::vector<double> log_likelihood;

  std::size_t size() const { return static_cast<std::size_t>(encoded.cols()); }
};

// Draws z from the prior, decodes, samples real coordinates from the
// decoder Gaussian and sets each categorical block to its arg-max value.
SampledNormals sample_normals(const GenModel& model, std::size_t m, std::uint64_t seed);
Vector sample_one(const GenModel& model, const Eigen::Ref<const Vector>& z, Rng& rng);

// epsilon * min log p(x | z) over the sample.
double compute_threshold(std::span<const double> log_likelihood, double epsilon);
double compute_threshold(const SampledNormals& normals, double epsilon);

enum class InflationMode { kLocal, kGlobal, kCategorical };

struct InflationPolicy {
  double fraction = 1.0 / 3.0;  // features inflated per anomaly
  double alpha = 3.0;           // local variance multiplier
  double beta = 1.2;            // global range multiplier
  std::size_t max_draws = 100000;

  void validate() const;
};

// Replaces feature j of a normalized point. Local: redraw from the fitted
// mixture with variances times alpha until outside every component's 2-sigma
// band. Global: uniform on the training range widened symmetrically by beta.
// Categorical: the rarest observed value.
Point inflate_feature(const Point& normalized, std::size_t j, InflationMode mode,
                      const InflationPolicy& policy, const MarginalModels& marginals,
                      Rng& rng);

struct SimBundle {
  FeatureSchema schema;
  std::vector<Point> normals;    // raw
  std::vector<Point> anomalies;  // raw
  std::vector<Vector> importances;
  std::vector<std::vector<std::size_t>> inflated;
  std::vector<std::vector<InflationMode>> modes;  // parallel to `inflated`
  double tau = 0.0;
  std::vector<double> scores;  // log p(anomaly | z) per anomaly
  Matrix anomaly_encoded;
  Matrix anomaly_latents;
  std::size_t candidates = 0;  // including rejected ones

  // Normals first, then anomalies, with labels.
  DatasetTable to_table() const;
};

// Runs the synthesis loop. Throws Error when 100 k candidates in a row are
// rejected.
SimBundle synthesize(const GenModel& model, std::size_t m, std::size_t k, double epsilon,
                     const InflationPolicy& policy, std::uint64_t seed);

// [{"row": i, "weights": {feature: e}}], rows offset past the normals.
nlohmann::ordered_json bundle_importances_json(const SimBundle& bundle);
// Writes the CSV, the schema sidecar and the importances file.
void write_bundle(const SimBundle& bundle, const std::string& csv_path,
                  const std::string& schema_path, const std::string& importances_path);

// Row -> weights (aligned with the schema) from an importances file.
std::vector<std::pair<std::size_t, Vector>> read_importances(const nlohmann::json& doc,
                                                             const FeatureSchema& schema);

}  // namespace alarmlib
