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
#include <vector>

#include "alarm/common.hpp"

namespace alarmlib {

// Univariate Gaussian mixture.
struct Mixture {
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> variances;
  double log_likelihood = 0.0;  // of the fit data

  std::size_t components() const { return weights.size(); }
  // Free parameters: G means, G variances, G - 1 weights.
  std::size_t parameters() const { return 3 * components() - 1; }
  double bic(std::size_t n) const;
  double log_density(double v) const;
  // True when v lies in [mean - w sd, mean + w sd] of some component.
  bool within_band(double v, double widths = 2.0) const;
  // Draws from the mixture with every variance scaled by `inflate`.
  double sample(Rng& rng, double inflate = 1.0) const;
};

struct MixtureOptions {
  std::size_t max_iterations = 300;
  double tolerance = 1e-8;
  // Relative variance floor (times the sample variance, at least 1e-12).
  double variance_floor = 1e-4;
};

// EM fit with G components, means initialized at evenly spaced quantiles.
Mixture fit_mixture(std::span<const double> values, std::size_t components,
                    const MixtureOptions& options = {});

// Lowest-BIC fit over G = 1..max_components (capped by the number of
// distinct values).
Mixture fit_mixture_bic(std::span<const double> values, std::size_t max_components = 5,
                        const MixtureOptions& options = {});

}  // namespace alarmlib
