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

#include "alarm/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

namespace alarmlib {
namespace {

double log_normal(double v, double mean, double var) {
  const double r = v - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + r * r / var);
}

double log_sum_exp(const std::vector<double>& a) {
  const double m = *std::max_element(a.begin(), a.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : a) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

double Mixture::bic(std::size_t n) const {
  return -2.0 * log_likelihood +
         static_cast<double>(parameters()) * std::log(static_cast<double>(n));
}

double Mixture::log_density(double v) const {
  std::vector<double> terms(components());
  for (std::size_t g = 0; g < components(); ++g)
    terms[g] = std::log(weights[g]) + log_normal(v, means[g], variances[g]);
  return log_sum_exp(terms);
}

bool Mixture::within_band(double v, double widths) const {
  for (std::size_t g = 0; g < components(); ++g)
    if (std::abs(v - means[g]) <= widths * std::sqrt(variances[g])) return true;
  return false;
}

double Mixture::sample(Rng& rng, double inflate) const {
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  const std::size_t g = pick(rng);
  std::normal_distribution<double> n(means[g], std::sqrt(inflate * variances[g]));
  return n(rng);
}

Mixture fit_mixture(std::span<const double> values, std::size_t components,
                    const MixtureOptions& options) {
  const std::size_t n = values.size();
  if (n == 0) throw InvalidArgument("cannot fit a mixture to no values");
  if (components == 0) throw InvalidArgument("mixture needs at least one component");

  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  double mean = 0.0;
  for (double v : sorted) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : sorted) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double floor = std::max(options.variance_floor * var, 1e-12);

  Mixture m;
  const auto g_count = components;
  m.weights.assign(g_count, 1.0 / static_cast<double>(g_count));
  m.variances.assign(g_count, std::max(var / static_cast<double>(g_count * g_count), floor));
  for (std::size_t g = 0; g < g_count; ++g) {
    const double q = (static_cast<double>(g) + 0.5) / static_cast<double>(g_count);
    m.means.push_back(sorted[std::min(n - 1, static_cast<std::size_t>(q * static_cast<double>(n)))]);
  }

  std::vector<double> resp(n * g_count), terms(g_count);
  double previous = -std::numeric_limits<double>::infinity();
  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t g = 0; g < g_count; ++g)
        terms[g] = std::log(m.weights[g]) + log_normal(values[i], m.means[g], m.variances[g]);
      const double total = log_sum_exp(terms);
      ll += total;
      for (std::size_t g = 0; g < g_count; ++g) resp[i * g_count + g] = std::exp(terms[g] - total);
    }
    m.log_likelihood = ll;
    if (std::abs(ll - previous) <= options.tolerance * std::max(1.0, std::abs(ll))) break;
    previous = ll;

    for (std::size_t g = 0; g < g_count; ++g) {
      double nk = 0.0, sx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        nk += resp[i * g_count + g];
        sx += resp[i * g_count + g] * values[i];
      }
      if (nk < 1e-12) {
        // Dead component: park it on the overall distribution.
        m.weights[g] = 1e-12;
        m.means[g] = mean;
        m.variances[g] = std::max(var, floor);
        continue;
      }
      const double mu = sx / nk;
      double sv = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double r = values[i] - mu;
        sv += resp[i * g_count + g] * r * r;
      }
      m.weights[g] = nk / static_cast<double>(n);
      m.means[g] = mu;
      m.variances[g] = std::max(sv / nk, floor);
    }
  }
  return m;
}

Mixture fit_mixture_bic(std::span<const double> values, std::size_t max_components,
                        const MixtureOptions& options) {
  const std::set<double> distinct(values.begin(), values.end());
  const std::size_t cap = std::max<std::size_t>(1, std::min(max_components, distinct.size()));
  Mixture best;
  double best_bic = std::numeric_limits<double>::infinity();
  for (std::size_t g = 1; g <= cap; ++g) {
    Mixture m = fit_mixture(values, g, options);
    const double b = m.bic(values.size());
    if (b < best_bic) {
      best_bic = b;
      best = std::move(m);
    }
  }
  return best;
}

}  // namespace alarmlib
