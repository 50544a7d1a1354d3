// dpvae/mlp_vae.cpp

// Copyright 2026 The dpvae Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dpvae/mlp_vae.hpp"

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <utility>

#include <json.hpp>

namespace dpvae {

namespace {

constexpr double kLeakySlope = 0.01;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

Eigen::MatrixXd linear_forward(const LinearLayer& layer,
                               const Eigen::MatrixXd& input) {
  Eigen::MatrixXd pre = input * layer.w.transpose();
  pre.rowwise() += layer.b.transpose();
  return pre;
}

Eigen::MatrixXd hidden_act(const Eigen::MatrixXd& pre, bool leaky) {
  const double slope = leaky ? kLeakySlope : 0.0;
  return pre.array().max(0.0) + slope * pre.array().min(0.0);
}

Eigen::ArrayXXd hidden_act_deriv(const Eigen::MatrixXd& pre, bool leaky) {
  const double slope = leaky ? kLeakySlope : 0.0;
  return (pre.array() > 0.0).cast<double>() * (1.0 - slope) + slope;
}

LinearLayer make_layer(int out_dim, int in_dim, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  LinearLayer layer;
  layer.w.resize(out_dim, in_dim);
  const double scale = std::sqrt(2.0 / static_cast<double>(in_dim));
  for (int r = 0; r < out_dim; ++r) {
    for (int c = 0; c < in_dim; ++c) layer.w(r, c) = scale * gauss(rng);
  }
  layer.b = Eigen::VectorXd::Zero(out_dim);
  layer.m_w = Eigen::MatrixXd::Zero(out_dim, in_dim);
  layer.v_w = Eigen::MatrixXd::Zero(out_dim, in_dim);
  layer.m_b = Eigen::VectorXd::Zero(out_dim);
  layer.v_b = Eigen::VectorXd::Zero(out_dim);
  return layer;
}

std::vector<const LinearLayer*> layer_order(const MlpVae& vae) {
  std::vector<const LinearLayer*> out;
  for (const auto& l : vae.encoder) out.push_back(&l);
  out.push_back(&vae.mu_head);
  out.push_back(&vae.logvar_head);
  for (const auto& l : vae.decoder) out.push_back(&l);
  out.push_back(&vae.output);
  return out;
}

std::vector<LinearLayer*> layer_order(MlpVae* vae) {
  std::vector<LinearLayer*> out;
  for (auto& l : vae->encoder) out.push_back(&l);
  out.push_back(&vae->mu_head);
  out.push_back(&vae->logvar_head);
  for (auto& l : vae->decoder) out.push_back(&l);
  out.push_back(&vae->output);
  return out;
}

// Everything the backward pass needs from one forward evaluation.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> enc_in;   // input to each encoder layer
  std::vector<Eigen::MatrixXd> enc_pre;  // its pre-activation
  Eigen::MatrixXd trunk_out;
  Eigen::MatrixXd mu, logvar, stddev, z;
  std::vector<Eigen::MatrixXd> dec_in;
  std::vector<Eigen::MatrixXd> dec_pre;
  Eigen::MatrixXd head_in;  // input to the output layer
  Eigen::MatrixXd xhat;
};

ForwardCache run_forward(const MlpVae& vae, const Eigen::MatrixXd& x,
                         const Eigen::MatrixXd& noise) {
  const bool leaky = vae.config.leaky_hidden();
  ForwardCache f;
  Eigen::MatrixXd h = x;
  for (const auto& layer : vae.encoder) {
    f.enc_in.push_back(h);
    f.enc_pre.push_back(linear_forward(layer, h));
    h = hidden_act(f.enc_pre.back(), leaky);
  }
  f.trunk_out = h;
  f.mu = linear_forward(vae.mu_head, h);
  f.logvar = linear_forward(vae.logvar_head, h);
  f.stddev = (0.5 * f.logvar.array()).exp();
  f.z = f.mu + f.stddev.cwiseProduct(noise);

  Eigen::MatrixXd g = f.z;
  for (const auto& layer : vae.decoder) {
    f.dec_in.push_back(g);
    f.dec_pre.push_back(linear_forward(layer, g));
    g = hidden_act(f.dec_pre.back(), leaky);
  }
  f.head_in = g;
  Eigen::MatrixXd xo = linear_forward(vae.output, g);
  if (vae.config.output_activation == "tanh") {
    f.xhat = xo.array().tanh().matrix();
  } else {
    f.xhat = std::move(xo);
  }
  return f;
}

void check_loss_inputs(const MlpVae& vae, const Eigen::MatrixXd& x,
                       const Eigen::MatrixXd& noise,
                       const Eigen::MatrixXd& resp,
                       const Eigen::MatrixXd& cluster_mean,
                       const Eigen::MatrixXd& cluster_var) {
  const int L = vae.config.latent_dim;
  if (x.cols() != vae.config.input_dim) {
    throw std::invalid_argument("vae loss: input dimension mismatch");
  }
  if (noise.rows() != x.rows() || noise.cols() != L) {
    throw std::invalid_argument("vae loss: noise must be batch x latent");
  }
  if (resp.rows() != x.rows() || resp.cols() != cluster_mean.rows() ||
      cluster_var.rows() != cluster_mean.rows()) {
    throw std::invalid_argument("vae loss: responsibility shape mismatch");
  }
  if (cluster_mean.cols() != L || cluster_var.cols() != L) {
    throw std::invalid_argument("vae loss: cluster moments must be K x latent");
  }
  if (cluster_var.size() > 0 && cluster_var.minCoeff() <= 0.0) {
    throw std::invalid_argument("vae loss: cluster variances must be positive");
  }
}

}  // namespace

void VaeConfig::validate() const {
  if (input_dim <= 0) {
    throw std::invalid_argument("VaeConfig: input_dim must be positive");
  }
  if (latent_dim <= 0) {
    throw std::invalid_argument("VaeConfig: latent_dim must be positive");
  }
  for (int h : hidden_dims) {
    if (h <= 0) {
      throw std::invalid_argument("VaeConfig: hidden dims must be positive");
    }
  }
  if (output_activation != "tanh" && output_activation != "linear") {
    throw std::invalid_argument(
        "VaeConfig: output_activation must be \"tanh\" or \"linear\"");
  }
  if (kld_weight < 0.0) {
    throw std::invalid_argument("VaeConfig: kld_weight must be >= 0");
  }
  if (!(learning_rate > 0.0)) {
    throw std::invalid_argument("VaeConfig: learning_rate must be positive");
  }
  if (weight_decay < 0.0) {
    throw std::invalid_argument("VaeConfig: weight_decay must be >= 0");
  }
  if (batch_size <= 0) {
    throw std::invalid_argument("VaeConfig: batch_size must be positive");
  }
}

MlpVae init_vae(const VaeConfig& config, std::mt19937_64& rng) {
  config.validate();
  MlpVae vae;
  vae.config = config;

  int in_dim = config.input_dim;
  for (int h : config.hidden_dims) {
    vae.encoder.push_back(make_layer(h, in_dim, rng));
    in_dim = h;
  }
  vae.mu_head = make_layer(config.latent_dim, in_dim, rng);
  vae.logvar_head = make_layer(config.latent_dim, in_dim, rng);

  in_dim = config.latent_dim;
  for (auto it = config.hidden_dims.rbegin(); it != config.hidden_dims.rend();
       ++it) {
    vae.decoder.push_back(make_layer(*it, in_dim, rng));
    in_dim = *it;
  }
  vae.output = make_layer(config.input_dim, in_dim, rng);
  return vae;
}

EncodeResult vae_encode(const MlpVae& vae, const Eigen::MatrixXd& x) {
  if (x.cols() != vae.config.input_dim) {
    throw std::invalid_argument("vae_encode: input dimension mismatch");
  }
  const bool leaky = vae.config.leaky_hidden();
  Eigen::MatrixXd h = x;
  for (const auto& layer : vae.encoder) {
    h = hidden_act(linear_forward(layer, h), leaky);
  }
  return {linear_forward(vae.mu_head, h), linear_forward(vae.logvar_head, h)};
}

Eigen::MatrixXd sample_latent(const EncodeResult& enc,
                              const Eigen::MatrixXd& noise) {
  if (noise.rows() != enc.mu.rows() || noise.cols() != enc.mu.cols()) {
    throw std::invalid_argument("sample_latent: noise shape mismatch");
  }
  return enc.mu +
         (0.5 * enc.logvar.array()).exp().matrix().cwiseProduct(noise);
}

Eigen::MatrixXd vae_decode(const MlpVae& vae, const Eigen::MatrixXd& z) {
  if (z.cols() != vae.config.latent_dim) {
    throw std::invalid_argument("vae_decode: latent dimension mismatch");
  }
  const bool leaky = vae.config.leaky_hidden();
  Eigen::MatrixXd g = z;
  for (const auto& layer : vae.decoder) {
    g = hidden_act(linear_forward(layer, g), leaky);
  }
  Eigen::MatrixXd xo = linear_forward(vae.output, g);
  if (vae.config.output_activation == "tanh") {
    return xo.array().tanh().matrix();
  }
  return xo;
}

double recon_mse(const Eigen::MatrixXd& x, const Eigen::MatrixXd& xhat) {
  if (x.rows() != xhat.rows() || x.cols() != xhat.cols()) {
    throw std::invalid_argument("recon_mse: shape mismatch");
  }
  if (x.size() == 0) {
    throw std::invalid_argument("recon_mse: empty input");
  }
  return (xhat - x).squaredNorm() / static_cast<double>(x.size());
}

double hard_latent_kl(const Eigen::VectorXd& mu, const Eigen::VectorXd& var,
                      const Eigen::VectorXd& cluster_mean,
                      const Eigen::VectorXd& cluster_var) {
  const Eigen::Index D = mu.size();
  if (var.size() != D || cluster_mean.size() != D || cluster_var.size() != D) {
    throw std::invalid_argument("hard_latent_kl: dimension mismatch");
  }
  if (D == 0) {
    throw std::invalid_argument("hard_latent_kl: empty vectors");
  }
  if (var.minCoeff() <= 0.0 || cluster_var.minCoeff() <= 0.0) {
    throw std::domain_error("hard_latent_kl: variances must be positive");
  }
  const Eigen::ArrayXd ratio = var.array() / cluster_var.array();
  const Eigen::ArrayXd diff = mu.array() - cluster_mean.array();
  return 0.5 * (cluster_var.array().log().sum() - var.array().log().sum() -
                static_cast<double>(D) + ratio.sum() +
                (diff.square() / cluster_var.array()).sum());
}

double soft_cluster_kl(const Eigen::VectorXd& mu, const Eigen::VectorXd& var,
                       const DpmmModel& model, const Eigen::VectorXd& probs) {
  const int K = model.K();
  if (probs.size() != K) {
    throw std::invalid_argument("soft_cluster_kl: probs length mismatch");
  }
  if (std::abs(probs.sum() - 1.0) > 1e-8) {
    throw std::invalid_argument("soft_cluster_kl: probs must sum to one");
  }
  double kl = 0.0;
  for (int k = 0; k < K; ++k) {
    const ClusterMoments m = cluster_moments(model, k);
    kl += probs[k] * hard_latent_kl(mu, var, m.mean, m.var);
  }
  return kl;
}

double soft_latent_kl(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& logvar,
                      const Eigen::MatrixXd& resp,
                      const Eigen::MatrixXd& cluster_mean,
                      const Eigen::MatrixXd& cluster_var) {
  const Eigen::Index B = mu.rows();
  const Eigen::Index L = mu.cols();
  if (logvar.rows() != B || logvar.cols() != L) {
    throw std::invalid_argument("soft_latent_kl: logvar shape mismatch");
  }
  if (resp.rows() != B || resp.cols() != cluster_mean.rows() ||
      cluster_mean.rows() != cluster_var.rows() || cluster_mean.cols() != L ||
      cluster_var.cols() != L) {
    throw std::invalid_argument("soft_latent_kl: cluster shape mismatch");
  }
  if (cluster_var.size() > 0 && cluster_var.minCoeff() <= 0.0) {
    throw std::invalid_argument("soft_latent_kl: variances must be positive");
  }

  const Eigen::MatrixXd inv_v = cluster_var.cwiseInverse();
  const Eigen::VectorXd logdet =
      cluster_var.array().log().rowwise().sum().matrix();
  // Per-point mixtures of the per-cluster terms.
  const Eigen::MatrixXd a = resp * inv_v;                              // B x L
  const Eigen::MatrixXd bm = resp * cluster_mean.cwiseProduct(inv_v);  // B x L
  const Eigen::MatrixXd m2 =
      resp * cluster_mean.array().square().matrix().cwiseProduct(inv_v);
  const Eigen::VectorXd p_sum = resp.rowwise().sum();
  const Eigen::ArrayXXd exp_lv = logvar.array().exp();

  const Eigen::ArrayXd quad =
      (exp_lv * a.array() + mu.array().square() * a.array() -
       2.0 * mu.array() * bm.array() + m2.array())
          .rowwise()
          .sum();
  const Eigen::ArrayXd kl_i =
      0.5 * ((resp * logdet).array() -
             p_sum.array() * (logvar.array().rowwise().sum() +
                              static_cast<double>(L)) +
             quad);
  return B > 0 ? kl_i.mean() : 0.0;
}

VaeLoss vae_loss(const MlpVae& vae, const Eigen::MatrixXd& x,
                 const Eigen::MatrixXd& noise, const Eigen::MatrixXd& resp,
                 const Eigen::MatrixXd& cluster_mean,
                 const Eigen::MatrixXd& cluster_var) {
  check_loss_inputs(vae, x, noise, resp, cluster_mean, cluster_var);
  ForwardCache f = run_forward(vae, x, noise);
  VaeLoss loss;
  loss.recon = recon_mse(x, f.xhat);
  loss.kl = soft_latent_kl(f.mu, f.logvar, resp, cluster_mean, cluster_var);
  loss.total = loss.recon + vae.config.kld_weight * loss.kl;
  return loss;
}

VaeStep vae_loss_and_grad(const MlpVae& vae, const Eigen::MatrixXd& x,
                          const Eigen::MatrixXd& noise,
                          const Eigen::MatrixXd& resp,
                          const Eigen::MatrixXd& cluster_mean,
                          const Eigen::MatrixXd& cluster_var) {
  check_loss_inputs(vae, x, noise, resp, cluster_mean, cluster_var);
  const bool leaky = vae.config.leaky_hidden();
  const Eigen::Index B = x.rows();
  const Eigen::Index D = x.cols();
  ForwardCache f = run_forward(vae, x, noise);

  VaeStep out;
  out.loss.recon = recon_mse(x, f.xhat);
  out.loss.kl = soft_latent_kl(f.mu, f.logvar, resp, cluster_mean, cluster_var);
  out.loss.total = out.loss.recon + vae.config.kld_weight * out.loss.kl;

  const std::size_t n_enc = vae.encoder.size();
  const std::size_t n_dec = vae.decoder.size();
  out.grads.resize(n_enc + 2 + n_dec + 1);

  // Reconstruction path, output layer inward.
  Eigen::MatrixXd d_xhat = 2.0 * (f.xhat - x) / static_cast<double>(B * D);
  Eigen::MatrixXd d_pre;
  if (vae.config.output_activation == "tanh") {
    d_pre = d_xhat.cwiseProduct(
        (1.0 - f.xhat.array().square()).matrix());
  } else {
    d_pre = d_xhat;
  }
  LayerGrad& g_out = out.grads[n_enc + 2 + n_dec];
  g_out.w = d_pre.transpose() * f.head_in;
  g_out.b = d_pre.colwise().sum().transpose();
  Eigen::MatrixXd d_h = d_pre * vae.output.w;

  for (std::size_t l = n_dec; l-- > 0;) {
    Eigen::MatrixXd d_layer_pre =
        d_h.cwiseProduct(hidden_act_deriv(f.dec_pre[l], leaky).matrix());
    LayerGrad& g = out.grads[n_enc + 2 + l];
    g.w = d_layer_pre.transpose() * f.dec_in[l];
    g.b = d_layer_pre.colwise().sum().transpose();
    d_h = d_layer_pre * vae.decoder[l].w;
  }
  const Eigen::MatrixXd d_z = d_h;

  // KL path straight into mu and logvar, with responsibilities and cluster
  // moments held constant.
  const double kl_scale = vae.config.kld_weight / static_cast<double>(B);
  const Eigen::MatrixXd inv_v = cluster_var.cwiseInverse();
  const Eigen::MatrixXd a = resp * inv_v;
  const Eigen::MatrixXd bm = resp * cluster_mean.cwiseProduct(inv_v);
  const Eigen::VectorXd p_sum = resp.rowwise().sum();
  Eigen::MatrixXd d_mu =
      kl_scale * (f.mu.cwiseProduct(a) - bm);
  Eigen::MatrixXd d_logvar =
      (0.5 * kl_scale) *
      ((f.logvar.array().exp() * a.array()).colwise() - p_sum.array())
          .matrix();

  // Reparameterization: z = mu + exp(logvar / 2) * noise.
  d_mu += d_z;
  d_logvar += 0.5 * d_z.cwiseProduct(f.stddev).cwiseProduct(noise);

  LayerGrad& g_mu = out.grads[n_enc];
  g_mu.w = d_mu.transpose() * f.trunk_out;
  g_mu.b = d_mu.colwise().sum().transpose();
  LayerGrad& g_lv = out.grads[n_enc + 1];
  g_lv.w = d_logvar.transpose() * f.trunk_out;
  g_lv.b = d_logvar.colwise().sum().transpose();

  Eigen::MatrixXd d_enc =
      d_mu * vae.mu_head.w + d_logvar * vae.logvar_head.w;
  for (std::size_t l = n_enc; l-- > 0;) {
    Eigen::MatrixXd d_layer_pre =
        d_enc.cwiseProduct(hidden_act_deriv(f.enc_pre[l], leaky).matrix());
    LayerGrad& g = out.grads[l];
    g.w = d_layer_pre.transpose() * f.enc_in[l];
    g.b = d_layer_pre.colwise().sum().transpose();
    d_enc = d_layer_pre * vae.encoder[l].w;
  }
  return out;
}

void adamw_step(MlpVae* vae, const VaeGradients& grads) {
  std::vector<LinearLayer*> layers = layer_order(vae);
  if (grads.size() != layers.size()) {
    throw std::invalid_argument("adamw_step: gradient count mismatch");
  }
  vae->adam_step += 1;
  const double t = static_cast<double>(vae->adam_step);
  const double bc1 = 1.0 - std::pow(kAdamBeta1, t);
  const double bc2 = 1.0 - std::pow(kAdamBeta2, t);
  const double lr = vae->config.learning_rate;
  const double wd = vae->config.weight_decay;

  for (std::size_t i = 0; i < layers.size(); ++i) {
    LinearLayer& l = *layers[i];
    const LayerGrad& g = grads[i];
    if (g.w.rows() != l.w.rows() || g.w.cols() != l.w.cols() ||
        g.b.size() != l.b.size()) {
      throw std::invalid_argument("adamw_step: gradient shape mismatch");
    }
    l.m_w = kAdamBeta1 * l.m_w + (1.0 - kAdamBeta1) * g.w;
    l.v_w = (kAdamBeta2 * l.v_w.array() +
             (1.0 - kAdamBeta2) * g.w.array().square())
                .matrix();
    l.m_b = kAdamBeta1 * l.m_b + (1.0 - kAdamBeta1) * g.b;
    l.v_b = (kAdamBeta2 * l.v_b.array() +
             (1.0 - kAdamBeta2) * g.b.array().square())
                .matrix();
    // Decoupled decay touches weights only.
    l.w -= lr * wd * l.w;
    l.w -= (lr * (l.m_w.array() / bc1) /
            ((l.v_w.array() / bc2).sqrt() + kAdamEps))
               .matrix();
    l.b -= (lr * (l.m_b.array() / bc1) /
            ((l.v_b.array() / bc2).sqrt() + kAdamEps))
               .matrix();
  }
}

Eigen::VectorXd flatten_vae(const MlpVae& vae) {
  std::vector<const LinearLayer*> layers = layer_order(vae);
  Eigen::Index total = 0;
  for (const auto* l : layers) total += l->w.size() + l->b.size();
  Eigen::VectorXd params(total);
  Eigen::Index at = 0;
  for (const auto* l : layers) {
    for (Eigen::Index r = 0; r < l->w.rows(); ++r) {
      for (Eigen::Index c = 0; c < l->w.cols(); ++c) {
        params(at++) = l->w(r, c);
      }
    }
    for (Eigen::Index r = 0; r < l->b.size(); ++r) params(at++) = l->b(r);
  }
  return params;
}

void unflatten_vae(MlpVae* vae, const Eigen::VectorXd& params) {
  std::vector<LinearLayer*> layers = layer_order(vae);
  Eigen::Index total = 0;
  for (const auto* l : layers) total += l->w.size() + l->b.size();
  if (params.size() != total) {
    throw std::invalid_argument("unflatten_vae: parameter count mismatch");
  }
  Eigen::Index at = 0;
  for (auto* l : layers) {
    for (Eigen::Index r = 0; r < l->w.rows(); ++r) {
      for (Eigen::Index c = 0; c < l->w.cols(); ++c) {
        l->w(r, c) = params(at++);
      }
    }
    for (Eigen::Index r = 0; r < l->b.size(); ++r) l->b(r) = params(at++);
  }
}

namespace {

constexpr const char* kCheckpointFormat = "dpvae.vae.v1";

// Visits every tensor of the model in checkpoint order: per layer (encoder
// trunk, mu head, logvar head, decoder trunk, output) the weight, bias and
// the four Adam moment tensors. Works on const and mutable models alike.
template <typename Vae, typename Fn>
void for_each_tensor(Vae& vae, Fn&& fn) {
  auto layer = [&](const std::string& prefix, auto& l) {
    fn(prefix + ".w", l.w);
    fn(prefix + ".b", l.b);
    fn(prefix + ".m_w", l.m_w);
    fn(prefix + ".v_w", l.v_w);
    fn(prefix + ".m_b", l.m_b);
    fn(prefix + ".v_b", l.v_b);
  };
  for (std::size_t i = 0; i < vae.encoder.size(); ++i) {
    layer("encoder." + std::to_string(i), vae.encoder[i]);
  }
  layer("mu_head", vae.mu_head);
  layer("logvar_head", vae.logvar_head);
  for (std::size_t i = 0; i < vae.decoder.size(); ++i) {
    layer("decoder." + std::to_string(i), vae.decoder[i]);
  }
  layer("output", vae.output);
}

void write_f64_le(std::ostream& out, double value) {
  const auto bits = std::bit_cast<std::uint64_t>(value);
  char buf[8];
  for (int i = 0; i < 8; ++i) {
    buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  }
  out.write(buf, 8);
}

double read_f64_le(std::istream& in) {
  char buf[8];
  in.read(buf, 8);
  if (in.gcount() != 8) {
    throw std::invalid_argument("vae checkpoint: blob truncated");
  }
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i]))
            << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

nlohmann::json config_to_json(const VaeConfig& c) {
  return {{"input_dim", c.input_dim},
          {"hidden_dims", c.hidden_dims},
          {"latent_dim", c.latent_dim},
          {"output_activation", c.output_activation},
          {"kld_weight", c.kld_weight},
          {"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size}};
}

VaeConfig config_from_json(const nlohmann::json& c) {
  VaeConfig cfg;
  cfg.input_dim = c.at("input_dim").get<int>();
  cfg.hidden_dims = c.at("hidden_dims").get<std::vector<int>>();
  cfg.latent_dim = c.at("latent_dim").get<int>();
  cfg.output_activation = c.at("output_activation").get<std::string>();
  cfg.kld_weight = c.at("kld_weight").get<double>();
  cfg.learning_rate = c.at("learning_rate").get<double>();
  cfg.weight_decay = c.at("weight_decay").get<double>();
  cfg.batch_size = c.at("batch_size").get<int>();
  cfg.validate();
  return cfg;
}

std::filesystem::path blob_path_for(const std::filesystem::path& manifest) {
  std::filesystem::path blob = manifest;
  blob.replace_extension(".bin");
  if (blob == manifest) blob += ".blob";
  return blob;
}

}  // namespace

void save_vae(const MlpVae& vae, const std::string& manifest_path) {
  const std::filesystem::path mpath(manifest_path);
  const std::filesystem::path bpath = blob_path_for(mpath);

  std::ofstream blob(bpath, std::ios::binary);
  if (!blob) {
    throw std::runtime_error("save_vae: cannot open " + bpath.string());
  }
  nlohmann::json tensors = nlohmann::json::array();
  for_each_tensor(vae, [&](const std::string& name, const auto& t) {
    tensors.push_back({{"name", name},
                       {"rows", static_cast<std::int64_t>(t.rows())},
                       {"cols", static_cast<std::int64_t>(t.cols())}});
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) {
        write_f64_le(blob, t(r, c));
      }
    }
  });
  blob.flush();
  if (!blob) {
    throw std::runtime_error("save_vae: write failed for " + bpath.string());
  }

  nlohmann::json manifest;
  manifest["format"] = kCheckpointFormat;
  manifest["config"] = config_to_json(vae.config);
  manifest["adam_step"] = vae.adam_step;
  manifest["blob"] = bpath.filename().string();
  manifest["tensors"] = std::move(tensors);

  std::ofstream out(mpath);
  if (!out) {
    throw std::runtime_error("save_vae: cannot open " + mpath.string());
  }
  out << manifest.dump(2) << "\n";
  if (!out) {
    throw std::runtime_error("save_vae: write failed for " + mpath.string());
  }
}

MlpVae load_vae(const std::string& manifest_path) {
  const std::filesystem::path mpath(manifest_path);
  std::ifstream in(mpath);
  if (!in) {
    throw std::runtime_error("load_vae: cannot open " + mpath.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json manifest = nlohmann::json::parse(ss.str());
  if (manifest.value("format", "") != kCheckpointFormat) {
    throw std::invalid_argument("vae checkpoint: unknown format");
  }

  // The layer layout is a function of the config, so rebuild the structure
  // first and then overwrite every tensor from the blob.
  std::mt19937_64 scratch_rng(0);
  MlpVae vae = init_vae(config_from_json(manifest.at("config")), scratch_rng);
  vae.adam_step = manifest.at("adam_step").get<std::int64_t>();

  const std::filesystem::path bpath =
      mpath.parent_path() / manifest.at("blob").get<std::string>();
  std::ifstream blob(bpath, std::ios::binary);
  if (!blob) {
    throw std::runtime_error("load_vae: cannot open " + bpath.string());
  }

  const auto& tensors = manifest.at("tensors");
  std::size_t next = 0;
  for_each_tensor(vae, [&](const std::string& name, auto& t) {
    if (next >= tensors.size()) {
      throw std::invalid_argument("vae checkpoint: tensor list too short");
    }
    const auto& entry = tensors.at(next++);
    if (entry.at("name").get<std::string>() != name ||
        entry.at("rows").get<std::int64_t>() != t.rows() ||
        entry.at("cols").get<std::int64_t>() != t.cols()) {
      throw std::invalid_argument(
          "vae checkpoint: tensor mismatch at " + name);
    }
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) {
        t(r, c) = read_f64_le(blob);
      }
    }
  });
  if (next != tensors.size()) {
    throw std::invalid_argument("vae checkpoint: tensor list too long");
  }
  if (blob.peek() != std::char_traits<char>::eof()) {
    throw std::invalid_argument("vae checkpoint: blob larger than manifest");
  }
  return vae;
}

}  // namespace dpvae
