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

#include "alarm/vae.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace alarmlib {
namespace {

Matrix relu(const Matrix& a) { return a.cwiseMax(0.0); }

Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> n01;
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n01(rng);
  return m;
}

void flatten_into(const Mlp& net, Vector& out, Eigen::Index& at) {
  for (std::size_t l = 0; l < net.layers(); ++l) {
    const auto& w = net.weights()[l];
    out.segment(at, w.size()) = Eigen::Map<const Vector>(w.data(), w.size());
    at += w.size();
    const auto& b = net.biases()[l];
    out.segment(at, b.size()) = b;
    at += b.size();
  }
}

void unflatten_from(Mlp& net, const Eigen::Ref<const Vector>& in, Eigen::Index& at) {
  for (std::size_t l = 0; l < net.layers(); ++l) {
    auto& w = net.weights()[l];
    Eigen::Map<Vector>(w.data(), w.size()) = in.segment(at, w.size());
    at += w.size();
    auto& b = net.biases()[l];
    b = in.segment(at, b.size());
    at += b.size();
  }
}

void flatten_grads(const std::vector<Matrix>& dw, const std::vector<Vector>& db, Vector& out,
                   Eigen::Index& at) {
  for (std::size_t l = 0; l < dw.size(); ++l) {
    out.segment(at, dw[l].size()) = Eigen::Map<const Vector>(dw[l].data(), dw[l].size());
    at += dw[l].size();
    out.segment(at, db[l].size()) = db[l];
    at += db[l].size();
  }
}

void zero_grads(const Mlp& net, std::vector<Matrix>& dw, std::vector<Vector>& db) {
  dw.clear();
  db.clear();
  for (std::size_t l = 0; l < net.layers(); ++l) {
    dw.push_back(Matrix::Zero(net.weights()[l].rows(), net.weights()[l].cols()));
    db.push_back(Vector::Zero(net.biases()[l].size()));
  }
}

nlohmann::json mlp_to_json(const Mlp& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < net.layers(); ++l) {
    const auto& w = net.weights()[l];
    const auto& b = net.biases()[l];
    layers.push_back({{"rows", w.rows()},
                      {"cols", w.cols()},
                      {"w", std::vector<double>(w.data(), w.data() + w.size())},
                      {"b", std::vector<double>(b.data(), b.data() + b.size())}});
  }
  return layers;
}

}  // namespace

Mlp::Mlp(std::size_t input, const std::vector<std::size_t>& widths, Rng& rng) {
  std::size_t in = input;
  for (auto out : widths) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Matrix w(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
    weights_.push_back(std::move(w));
    biases_.push_back(Vector::Zero(static_cast<Eigen::Index>(out)));
    in = out;
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l)
    n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
  return n;
}

std::size_t Mlp::input_width() const {
  return weights_.empty() ? 0 : static_cast<std::size_t>(weights_.front().cols());
}

std::size_t Mlp::output_width() const {
  return weights_.empty() ? 0 : static_cast<std::size_t>(weights_.back().rows());
}

Matrix Mlp::forward(const Matrix& x, Trace* trace) const {
  Matrix h = x;
  if (trace) {
    trace->inputs.clear();
    trace->activations.clear();
  }
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix a = (weights_[l] * h).colwise() + biases_[l];
    if (trace) {
      trace->inputs.push_back(h);
      trace->activations.push_back(a);
    }
    h = l + 1 < weights_.size() ? relu(a) : std::move(a);
  }
  return h;
}

Matrix Mlp::backward(const Trace& trace, const Matrix& d_output, std::vector<Matrix>& d_weights,
                     std::vector<Vector>& d_biases) const {
  Matrix d_a = d_output;
  for (std::size_t l = weights_.size(); l-- > 0;) {
    d_weights[l].noalias() += d_a * trace.inputs[l].transpose();
    d_biases[l] += d_a.rowwise().sum();
    Matrix d_h = weights_[l].transpose() * d_a;
    if (l > 0) {
      d_a = d_h.cwiseProduct(
          (trace.activations[l - 1].array() > 0.0).cast<double>().matrix());
    } else {
      return d_h;
    }
  }
  return d_a;
}

Vae::Vae(std::size_t data_width, const VaeConfig& config)
    : data_width_(data_width), config_(config) {
  if (data_width == 0) throw InvalidArgument("VAE needs at least one data dimension");
  if (config.latent == 0) throw InvalidArgument("VAE latent dimension must be >= 1", "latent");
  Rng rng(config.seed);
  std::vector<std::size_t> enc = config.hidden;
  enc.push_back(2 * config.latent);
  std::vector<std::size_t> dec(config.hidden.rbegin(), config.hidden.rend());
  dec.push_back(2 * data_width);
  encoder_ = Mlp(data_width, enc, rng);
  decoder_ = Mlp(config.latent, dec, rng);
}

LossBreakdown Vae::loss_and_gradient(const Matrix& x, const Matrix& eps) const {
  const auto d = static_cast<Eigen::Index>(data_width_);
  const auto k = static_cast<Eigen::Index>(config_.latent);
  const auto batch = x.cols();
  const double inv_b = 1.0 / static_cast<double>(batch);

  Mlp::Trace enc_trace, dec_trace;
  const Matrix enc_out = encoder_.forward(x, &enc_trace);
  const Matrix mu_q = enc_out.topRows(k);
  const Matrix lv_q = enc_out.bottomRows(k);
  const Matrix std_q = (0.5 * lv_q.array()).exp().matrix();
  const Matrix z = mu_q + std_q.cwiseProduct(eps);

  const Matrix dec_out = decoder_.forward(z, &dec_trace);
  const Matrix mu_x = dec_out.topRows(d);
  const Matrix exp_lv = dec_out.bottomRows(d).array().exp().matrix();
  const Matrix var = exp_lv.array() + config_.min_variance;
  const Matrix resid = x - mu_x;

  LossBreakdown out;
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  out.reconstruction =
      0.5 * inv_b *
      (static_cast<double>(d * batch) * log_2pi + var.array().log().sum() +
       (resid.array().square() / var.array()).sum());
  out.kl = 0.5 * inv_b *
           (mu_q.array().square() + lv_q.array().exp() - 1.0 - lv_q.array()).sum();
  out.loss = out.reconstruction + out.kl;

  Matrix d_dec(2 * d, batch);
  d_dec.topRows(d) = -inv_b * (resid.array() / var.array()).matrix();
  d_dec.bottomRows(d) =
      (inv_b * (0.5 / var.array() - 0.5 * resid.array().square() / var.array().square()) *
       exp_lv.array())
          .matrix();

  std::vector<Matrix> dw_dec, dw_enc;
  std::vector<Vector> db_dec, db_enc;
  zero_grads(decoder_, dw_dec, db_dec);
  zero_grads(encoder_, dw_enc, db_enc);
  const Matrix d_z = decoder_.backward(dec_trace, d_dec, dw_dec, db_dec);

  Matrix d_enc(2 * k, batch);
  d_enc.topRows(k) = d_z + inv_b * mu_q;
  d_enc.bottomRows(k) =
      (d_z.array() * 0.5 * std_q.array() * eps.array() + inv_b * 0.5 * (lv_q.array().exp() - 1.0))
          .matrix();
  encoder_.backward(enc_trace, d_enc, dw_enc, db_enc);

  out.gradient.resize(static_cast<Eigen::Index>(encoder_.parameter_count() +
                                                decoder_.parameter_count()));
  Eigen::Index at = 0;
  flatten_grads(dw_enc, db_enc, out.gradient, at);
  flatten_grads(dw_dec, db_dec, out.gradient, at);
  return out;
}

std::vector<double> Vae::train(const Matrix& data) {
  if (data.cols() == 0) throw InvalidArgument("cannot train the generative model on no data");
  if (data.rows() != static_cast<Eigen::Index>(data_width_))
    throw InvalidArgument("training data width does not match the model");
  Rng rng(mix64(config_.seed ^ 0x5eedULL));
  Vector theta = parameters();
  Vector m1 = Vector::Zero(theta.size()), m2 = Vector::Zero(theta.size());
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  std::size_t step = 0;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.cols()));
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<Eigen::Index>(std::max<std::size_t>(1, config_.batch_size));
  std::vector<double> history;
  history.reserve(config_.epochs);
  for (std::size_t epoch = 0; epoch < config_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (Eigen::Index start = 0; start < data.cols(); start += batch) {
      const auto n = std::min(batch, data.cols() - start);
      Matrix x(data.rows(), n);
      for (Eigen::Index j = 0; j < n; ++j)
        x.col(j) = data.col(order[static_cast<std::size_t>(start + j)]);
      const Matrix eps =
          standard_normal(static_cast<Eigen::Index>(config_.latent), n, rng);
      const auto lb = loss_and_gradient(x, eps);
      if (!std::isfinite(lb.loss) || !lb.gradient.allFinite()) {
        std::ostringstream msg;
        msg << "generative model training diverged at epoch " << epoch + 1
            << " (reconstruction " << lb.reconstruction << ", kl " << lb.kl << ")";
        throw Error(msg.str());
      }
      epoch_loss += lb.loss * static_cast<double>(n);
      ++step;
      m1 = kBeta1 * m1 + (1.0 - kBeta1) * lb.gradient;
      m2 = kBeta2 * m2 + (1.0 - kBeta2) * lb.gradient.cwiseAbs2();
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      theta.array() -= config_.learning_rate * (m1.array() / c1) /
                       ((m2.array() / c2).sqrt() + kEps);
      set_parameters(theta);
    }
    history.push_back(epoch_loss / static_cast<double>(data.cols()));
  }
  return history;
}

Vae::Decoded Vae::decode(const Eigen::Ref<const Vector>& z) const {
  const auto d = static_cast<Eigen::Index>(data_width_);
  const Matrix out = decoder_.forward(Matrix(z));
  return {out.col(0).head(d), out.col(0).tail(d).array().exp() + config_.min_variance};
}

std::pair<Vector, Vector> Vae::encode(const Eigen::Ref<const Vector>& x) const {
  const auto k = static_cast<Eigen::Index>(config_.latent);
  const Matrix out = encoder_.forward(Matrix(x));
  return {out.col(0).head(k), out.col(0).tail(k)};
}

Vector Vae::parameters() const {
  Vector theta(static_cast<Eigen::Index>(encoder_.parameter_count() + decoder_.parameter_count()));
  Eigen::Index at = 0;
  flatten_into(encoder_, theta, at);
  flatten_into(decoder_, theta, at);
  return theta;
}

void Vae::set_parameters(const Eigen::Ref<const Vector>& theta) {
  if (static_cast<std::size_t>(theta.size()) !=
      encoder_.parameter_count() + decoder_.parameter_count())
    throw InvalidArgument("parameter vector has the wrong length");
  Eigen::Index at = 0;
  unflatten_from(encoder_, theta, at);
  unflatten_from(decoder_, theta, at);
}

nlohmann::json Vae::to_json() const {
  return {{"data_width", data_width_},
          {"hidden", config_.hidden},
          {"latent", config_.latent},
          {"min_variance", config_.min_variance},
          {"encoder", mlp_to_json(encoder_)},
          {"decoder", mlp_to_json(decoder_)}};
}

Vae Vae::from_json(const nlohmann::json& doc) {
  VaeConfig c;
  c.hidden = doc.at("hidden").get<std::vector<std::size_t>>();
  c.latent = doc.at("latent").get<std::size_t>();
  c.min_variance = doc.at("min_variance").get<double>();
  Vae vae(doc.at("data_width").get<std::size_t>(), c);
  auto load = [](Mlp& net, const nlohmann::json& layers) {
    if (layers.size() != net.layers()) throw DataError("VAE layer count mismatch");
    for (std::size_t l = 0; l < net.layers(); ++l) {
      const auto w = layers[l].at("w").get<std::vector<double>>();
      const auto b = layers[l].at("b").get<std::vector<double>>();
      auto& W = net.weights()[l];
      if (static_cast<Eigen::Index>(w.size()) != W.size() ||
          static_cast<Eigen::Index>(b.size()) != net.biases()[l].size())
        throw DataError("VAE layer shape mismatch");
      W = Eigen::Map<const Matrix>(w.data(), W.rows(), W.cols());
      net.biases()[l] = Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size()));
    }
  };
  load(vae.encoder_, doc.at("encoder"));
  load(vae.decoder_, doc.at("decoder"));
  return vae;
}

double log_px_given_z(const Vae& vae, const Eigen::Ref<const Vector>& x,
                      const Eigen::Ref<const Vector>& z) {
  if (static_cast<std::size_t>(x.size()) != vae.data_width())
    throw InvalidArgument("point width does not match the generative model");
  const auto dec = vae.decode(z);
  return gaussian_log_density(x, dec.mean, dec.variance);
}

}  // namespace alarmlib
