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

#include "alarm/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace alarmlib {

bool MarginalModels::inflatable(std::size_t feature) const {
  if (real[feature]) return true;
  return categorical[feature] && categorical[feature]->values.size() >= 2;
}

MarginalModels fit_marginals(const DatasetTable& normalized, std::size_t max_components) {
  if (normalized.empty()) throw InvalidArgument("cannot fit marginals on an empty dataset");
  const auto& schema = normalized.schema;
  MarginalModels out;
  out.real.resize(schema.size());
  out.categorical.resize(schema.size());
  for (std::size_t j = 0; j < schema.size(); ++j) {
    if (schema[j].is_real()) {
      std::vector<double> values;
      values.reserve(normalized.size());
      for (const auto& row : normalized.rows) values.push_back(row.real(j));
      MarginalModels::Real r;
      r.mixture = fit_mixture_bic(values, max_components);
      const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
      r.min = *lo;
      r.max = *hi;
      out.real[j] = std::move(r);
    } else {
      std::vector<std::size_t> counts(schema[j].values.size(), 0);
      for (const auto& row : normalized.rows)
        ++counts[*schema.category_index(j, row.category(j))];
      MarginalModels::Categorical c;
      std::size_t fewest = 0;
      for (std::size_t v = 0; v < counts.size(); ++v) {
        if (counts[v] == 0) continue;
        if (c.values.empty() || counts[v] < fewest) {
          fewest = counts[v];
          c.rarest = schema[j].values[v];
        }
        c.values.push_back(schema[j].values[v]);
        c.counts.push_back(counts[v]);
      }
      out.categorical[j] = std::move(c);
    }
  }
  return out;
}

Vector GenModel::encode(const Point& raw) const {
  return layout.encode(normalize(raw, normalizer));
}

Point GenModel::decode(const Eigen::Ref<const Vector>& encoded) const {
  return denormalize(layout.decode(encoded), normalizer);
}

GenModel train_genmodel(const DatasetTable& normals, const VaeConfig& config) {
  if (normals.empty()) throw InvalidArgument("cannot train the generative model on no data");
  if (normals.labels)
    for (std::size_t i = 0; i < normals.size(); ++i)
      if ((*normals.labels)[i] != Label::kInlier)
        throw DataError("training data must contain only inliers (row " +
                            std::to_string(i + 1) + " is labelled anomalous)",
                        "label");
  normals.validate();
  GenModel model;
  model.schema = normals.schema;
  model.normalizer = fit_normalizer(normals);
  model.layout = OneHotLayout(normals.schema);

  DatasetTable normalized{normals.schema, {}, std::nullopt};
  normalized.rows.reserve(normals.size());
  Matrix data(static_cast<Eigen::Index>(model.layout.width()),
              static_cast<Eigen::Index>(normals.size()));
  for (std::size_t i = 0; i < normals.size(); ++i) {
    normalized.rows.push_back(normalize(normals.rows[i], model.normalizer));
    data.col(static_cast<Eigen::Index>(i)) = model.layout.encode(normalized.rows.back());
  }
  model.marginals = fit_marginals(normalized);
  model.vae = Vae(model.layout.width(), config);
  model.loss_history = model.vae.train(data);
  return model;
}

double log_px_given_z(const GenModel& model, const Eigen::Ref<const Vector>& x,
                      const Eigen::Ref<const Vector>& z) {
  return log_px_given_z(model.vae, x, z);
}

Vector sample_one(const GenModel& model, const Eigen::Ref<const Vector>& z, Rng& rng) {
  const auto dec = model.vae.decode(z);
  std::normal_distribution<double> n01;
  Vector x = dec.mean;
  for (std::size_t j = 0; j < model.schema.size(); ++j) {
    const auto off = static_cast<Eigen::Index>(model.layout.offset(j));
    const auto span = static_cast<Eigen::Index>(model.layout.span(j));
    if (model.schema[j].is_real()) {
      x[off] = dec.mean[off] + std::sqrt(dec.variance[off]) * n01(rng);
    } else {
      Eigen::Index best = 0;
      dec.mean.segment(off, span).maxCoeff(&best);
      x.segment(off, span).setZero();
      x[off + best] = 1.0;
    }
  }
  return x;
}

namespace {

Vector draw_latent(std::size_t dims, Rng& rng) {
  std::normal_distribution<double> n01;
  Vector z(static_cast<Eigen::Index>(dims));
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = n01(rng);
  return z;
}

}  // namespace

SampledNormals sample_normals(const GenModel& model, std::size_t m, std::uint64_t seed) {
  Rng rng(seed);
  SampledNormals out;
  out.encoded.resize(static_cast<Eigen::Index>(model.layout.width()), static_cast<Eigen::Index>(m));
  out.latents.resize(static_cast<Eigen::Index>(model.vae.latent()), static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    out.latents.col(c) = draw_latent(model.vae.latent(), rng);
    out.encoded.col(c) = sample_one(model, out.latents.col(c), rng);
    out.log_likelihood.push_back(log_px_given_z(model, out.encoded.col(c), out.latents.col(c)));
  }
  return out;
}

double compute_threshold(std::span<const double> log_likelihood, double epsilon) {
  if (log_likelihood.empty()) throw InvalidArgument("threshold needs at least one normal sample");
  return epsilon * *std::min_element(log_likelihood.begin(), log_likelihood.end());
}

double compute_threshold(const SampledNormals& normals, double epsilon) {
  return compute_threshold(normals.log_likelihood, epsilon);
}

void InflationPolicy::validate() const {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw InvalidArgument("inflation fraction must lie in [0, 1]", "fraction");
  if (!(alpha > 1.0)) throw InvalidArgument("local variance multiplier must exceed 1", "alpha");
  if (!(beta > 1.0)) throw InvalidArgument("global range multiplier must exceed 1", "beta");
}

Point inflate_feature(const Point& normalized, std::size_t j, InflationMode mode,
                      const InflationPolicy& policy, const MarginalModels& marginals,
                      Rng& rng) {
  if (j >= normalized.size())
    throw InvalidArgument("feature index out of range", std::to_string(j));
  Point out = normalized;
  if (mode == InflationMode::kCategorical) {
    const auto& cat = marginals.categorical.at(j);
    if (!cat) throw InvalidArgument("feature is not categorical", std::to_string(j));
    if (cat->values.size() < 2)
      throw InvalidArgument("categorical feature with a single observed value cannot be inflated",
                            std::to_string(j));
    out.values[j] = cat->rarest;
    return out;
  }
  const auto& real = marginals.real.at(j);
  if (!real) throw InvalidArgument("feature is not real", std::to_string(j));
  if (mode == InflationMode::kGlobal) {
    const double centre = 0.5 * (real->min + real->max);
    const double half = 0.5 * (real->max - real->min) * policy.beta;
    std::uniform_real_distribution<double> u(centre - half, centre + half);
    out.values[j] = u(rng);
    return out;
  }
  for (std::size_t draw = 0; draw < policy.max_draws; ++draw) {
    const double v = real->mixture.sample(rng, policy.alpha);
    if (!real->mixture.within_band(v)) {
      out.values[j] = v;
      return out;
    }
  }
  throw Error("local inflation found no value outside the 2-sigma bands after " +
              std::to_string(policy.max_draws) + " draws");
}

DatasetTable SimBundle::to_table() const {
  DatasetTable t{schema, normals, std::vector<Label>(normals.size(), Label::kInlier)};
  t.rows.insert(t.rows.end(), anomalies.begin(), anomalies.end());
  t.labels->insert(t.labels->end(), anomalies.size(), Label::kAnomaly);
  return t;
}

SimBundle synthesize(const GenModel& model, std::size_t m, std::size_t k, double epsilon,
                     const InflationPolicy& policy, std::uint64_t seed) {
  policy.validate();
  if (m == 0) throw InvalidArgument("need at least one normal sample to set the threshold", "m");
  const auto& schema = model.schema;
  SimBundle bundle;
  bundle.schema = schema;

  const SampledNormals normals = sample_normals(model, m, seed);
  bundle.tau = compute_threshold(normals, epsilon);
  for (std::size_t i = 0; i < m; ++i)
    bundle.normals.push_back(model.decode(normals.encoded.col(static_cast<Eigen::Index>(i))));

  std::vector<std::size_t> eligible;
  for (std::size_t j = 0; j < schema.size(); ++j)
    if (model.marginals.inflatable(j)) eligible.push_back(j);
  const auto inflate_count = std::min(
      eligible.size(),
      static_cast<std::size_t>(std::llround(policy.fraction * static_cast<double>(schema.size()))));

  const auto width = static_cast<Eigen::Index>(model.layout.width());
  const auto latent = static_cast<Eigen::Index>(model.vae.latent());
  bundle.anomaly_encoded.resize(width, static_cast<Eigen::Index>(k));
  bundle.anomaly_latents.resize(latent, static_cast<Eigen::Index>(k));

  Rng rng(mix64(seed ^ 0xa11a5eedULL));
  std::size_t rejected_run = 0;
  while (bundle.anomalies.size() < k) {
    ++bundle.candidates;
    const Vector z = draw_latent(model.vae.latent(), rng);
    const Vector x = sample_one(model, z, rng);
    const double base = log_px_given_z(model, x, z);
    const Point x_point = model.layout.decode(x);

    std::vector<std::size_t> chosen = eligible;
    std::shuffle(chosen.begin(), chosen.end(), rng);
    chosen.resize(inflate_count);
    std::sort(chosen.begin(), chosen.end());

    Vector e = Vector::Zero(static_cast<Eigen::Index>(schema.size()));
    Point candidate = x_point;
    std::vector<InflationMode> modes;
    for (std::size_t j : chosen) {
      InflationMode mode = InflationMode::kCategorical;
      if (schema[j].is_real())
        mode = std::bernoulli_distribution(0.5)(rng) ? InflationMode::kLocal
                                                     : InflationMode::kGlobal;
      modes.push_back(mode);
      const Point inflated = inflate_feature(x_point, j, mode, policy, model.marginals, rng);
      const double lp = log_px_given_z(model, model.layout.encode(inflated), z);
      e[static_cast<Eigen::Index>(j)] = std::max(0.0, base - lp);
      candidate.values[j] = inflated.values[j];
    }
    const Vector encoded = model.layout.encode(candidate);
    const double s = log_px_given_z(model, encoded, z);
    if (s < bundle.tau) {
      const auto c = static_cast<Eigen::Index>(bundle.anomalies.size());
      bundle.anomaly_encoded.col(c) = encoded;
      bundle.anomaly_latents.col(c) = z;
      bundle.anomalies.push_back(denormalize(candidate, model.normalizer));
      bundle.importances.push_back(std::move(e));
      bundle.inflated.push_back(std::move(chosen));
      bundle.modes.push_back(std::move(modes));
      bundle.scores.push_back(s);
      rejected_run = 0;
    } else if (++rejected_run >= 100 * k) {
      std::ostringstream msg;
      msg << "anomaly synthesis stalled: " << rejected_run
          << " consecutive candidates rejected (rejection rate "
          << static_cast<double>(bundle.candidates - bundle.anomalies.size()) /
                 static_cast<double>(bundle.candidates)
          << ", tau " << bundle.tau << "); check epsilon";
      throw Error(msg.str(), "epsilon");
    }
  }
  return bundle;
}

nlohmann::ordered_json bundle_importances_json(const SimBundle& bundle) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < bundle.importances.size(); ++i) {
    nlohmann::ordered_json weights = nlohmann::ordered_json::object();
    for (std::size_t j = 0; j < bundle.schema.size(); ++j)
      weights[bundle.schema[j].name] = bundle.importances[i][static_cast<Eigen::Index>(j)];
    out.push_back({{"row", bundle.normals.size() + i}, {"weights", std::move(weights)}});
  }
  return out;
}

void write_bundle(const SimBundle& bundle, const std::string& csv_path,
                  const std::string& schema_path, const std::string& importances_path) {
  write_csv(bundle.to_table(), csv_path, schema_path);
  std::ofstream out(importances_path);
  if (!out) throw Error("cannot write " + importances_path, "importances");
  out << bundle_importances_json(bundle).dump(2) << '\n';
}

std::vector<std::pair<std::size_t, Vector>> read_importances(const nlohmann::json& doc,
                                                             const FeatureSchema& schema) {
  if (!doc.is_array()) throw DataError("importances file must hold a JSON array");
  std::vector<std::pair<std::size_t, Vector>> out;
  for (const auto& entry : doc) {
    const auto row = entry.at("row").get<std::size_t>();
    Vector w = Vector::Zero(static_cast<Eigen::Index>(schema.size()));
    for (const auto& [name, value] : entry.at("weights").items())
      w[static_cast<Eigen::Index>(schema.index_of(name))] = value.get<double>();
    out.emplace_back(row, std::move(w));
  }
  return out;
}

}  // namespace alarmlib
