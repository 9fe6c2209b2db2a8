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

#include <cmath>
#include <numbers>
#include <vector>

#include "alarm/common.hpp"
#include "json.hpp"

namespace alarmlib {

// Sum over coordinates of log N(x_i; mean_i, var_i).
template <typename DX, typename DM, typename DV>
typename DX::Scalar gaussian_log_density(const Eigen::MatrixBase<DX>& x,
                                         const Eigen::MatrixBase<DM>& mean,
                                         const Eigen::MatrixBase<DV>& var) {
  using Scalar = typename DX::Scalar;
  const Scalar log_2pi = std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
  const auto r = (x - mean).array();
  return Scalar(-0.5) * (Scalar(x.size()) * log_2pi + var.array().log().sum() +
                         (r * r / var.array()).sum());
}

// Fully connected layer stack: ReLU between layers, linear output.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t input, const std::vector<std::size_t>& widths, Rng& rng);

  struct Trace {
    std::vector<Matrix> inputs;       // input of each layer
    std::vector<Matrix> activations;  // pre-activation of each layer
  };

  // Columns are samples.
  Matrix forward(const Matrix& x, Trace* trace = nullptr) const;
  // Accumulates parameter gradients for d(loss)/d(output) and returns
  // d(loss)/d(input).
  Matrix backward(const Trace& trace, const Matrix& d_output, std::vector<Matrix>& d_weights,
                  std::vector<Vector>& d_biases) const;

  std::size_t layers() const { return weights_.size(); }
  std::size_t parameter_count() const;
  std::size_t input_width() const;
  std::size_t output_width() const;
  std::vector<Matrix>& weights() { return weights_; }
  std::vector<Vector>& biases() { return biases_; }
  const std::vector<Matrix>& weights() const { return weights_; }
  const std::vector<Vector>& biases() const { return biases_; }

 private:
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

struct VaeConfig {
  // Encoder hidden widths; the decoder mirrors them.
  std::vector<std::size_t> hidden = {64, 32};
  std::size_t latent = 8;
  std::size_t epochs = 300;
  std::size_t batch_size = 256;
  double learning_rate = 5e-4;
  // Added to the decoder's exp(log-variance) so variances stay positive.
  double min_variance = 1e-3;
  std::uint64_t seed = 0;

  static VaeConfig desk() { return {}; }
  static VaeConfig paper() {
    VaeConfig c;
    c.hidden = {500, 200};
    c.latent = 15;
    c.epochs = 1500;
    return c;
  }
};

struct LossBreakdown {
  double loss = 0.0;  // mean negative ELBO over the batch
  double reconstruction = 0.0;
  double kl = 0.0;
  Vector gradient;  // d(loss)/d(parameters), flattened like parameters()
};

// Gaussian-decoder VAE with a standard-normal latent prior. The decoder
// emits a mean and a variance per data dimension.
class Vae {
 public:
  Vae() = default;
  Vae(std::size_t data_width, const VaeConfig& config);

  std::size_t data_width() const { return data_width_; }
  std::size_t latent() const { return config_.latent; }
  const VaeConfig& config() const { return config_; }

  // Negative ELBO for data columns `x` with fixed reparameterization noise `eps`.
  LossBreakdown loss_and_gradient(const Matrix& x, const Matrix& eps) const;

  // Mean negative ELBO per epoch.
  std::vector<double> train(const Matrix& data);

  struct Decoded {
    Vector mean;
    Vector variance;
  };
  Decoded decode(const Eigen::Ref<const Vector>& z) const;
  // Posterior mean and log-variance of q(z | x).
  std::pair<Vector, Vector> encode(const Eigen::Ref<const Vector>& x) const;

  Vector parameters() const;
  void set_parameters(const Eigen::Ref<const Vector>& theta);

  nlohmann::json to_json() const;
  static Vae from_json(const nlohmann::json& doc);

 private:
  std::size_t data_width_ = 0;
  VaeConfig config_;
  Mlp encoder_;
  Mlp decoder_;
};

// log p(x | z) under the decoder's Gaussian.
double log_px_given_z(const Vae& vae, const Eigen::Ref<const Vector>& x,
                      const Eigen::Ref<const Vector>& z);

}  // namespace alarmlib
