// dpvae/mlp_vae.hpp

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

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dpvae/dpmm.hpp"

// A fully-connected variational auto-encoder trained by explicit
// backpropagation. The latent regularizer is a responsibility-weighted KL
// between each encoding and diagonal-Gaussian cluster targets, so the
// encoder can be steered by an external mixture model instead of a fixed
// standard-normal prior.

namespace dpvae {

struct VaeConfig {
  int input_dim = 0;
  std::vector<int> hidden_dims{256};
  int latent_dim = 16;
  std::string output_activation = "tanh";  // "tanh" or "linear"
  double kld_weight = 1e-3;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  int batch_size = 64;

  void validate() const;

  // Hidden units pair LeakyReLU with the bounded image head and plain ReLU
  // with the linear head.
  bool leaky_hidden() const { return output_activation == "tanh"; }
};

// One dense layer plus its Adam moment estimates.
struct LinearLayer {
  Eigen::MatrixXd w;  // rows index outputs, columns index inputs
  Eigen::VectorXd b;
  Eigen::MatrixXd m_w, v_w;
  Eigen::VectorXd m_b, v_b;
};

struct MlpVae {
  VaeConfig config;
  std::vector<LinearLayer> encoder;  // hidden trunk
  LinearLayer mu_head;
  LinearLayer logvar_head;
  std::vector<LinearLayer> decoder;  // hidden trunk, mirror of the encoder
  LinearLayer output;
  std::int64_t adam_step = 0;
};

// Kaiming fan-in initialization for all weights, zero biases, zero moments.
MlpVae init_vae(const VaeConfig& config, std::mt19937_64& rng);

struct EncodeResult {
  Eigen::MatrixXd mu;      // batch x latent
  Eigen::MatrixXd logvar;  // batch x latent
};

EncodeResult vae_encode(const MlpVae& vae, const Eigen::MatrixXd& x);

// z = mu + exp(logvar / 2) * noise, with noise supplied by the caller so
// that a training step is a deterministic function of its inputs.
Eigen::MatrixXd sample_latent(const EncodeResult& enc,
                              const Eigen::MatrixXd& noise);

Eigen::MatrixXd vae_decode(const MlpVae& vae, const Eigen::MatrixXd& z);

// Mean squared error between a batch and its reconstruction, averaged over
// every entry (batch rows times feature columns).
double recon_mse(const Eigen::MatrixXd& x, const Eigen::MatrixXd& xhat);

// KL(N(mu, diag(var)) || N(cluster_mean, diag(cluster_var))) between two
// diagonal Gaussians. Throws std::domain_error on a non-positive variance.
double hard_latent_kl(const Eigen::VectorXd& mu, const Eigen::VectorXd& var,
                      const Eigen::VectorXd& cluster_mean,
                      const Eigen::VectorXd& cluster_var);

// Assignment-weighted KL of one encoding against every cluster of a mixture
// model: sum_k probs(k) * hard_latent_kl(mu, var, moments of cluster k).
// probs must sum to one within 1e-8.
double soft_cluster_kl(const Eigen::VectorXd& mu, const Eigen::VectorXd& var,
                       const DpmmModel& model, const Eigen::VectorXd& probs);

// Mean over the batch of sum_k resp(i,k) *
// KL(N(mu_i, diag(exp(logvar_i))) || N(cluster_mean_k, diag(cluster_var_k))).
double soft_latent_kl(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& logvar,
                      const Eigen::MatrixXd& resp,
                      const Eigen::MatrixXd& cluster_mean,
                      const Eigen::MatrixXd& cluster_var);

struct VaeLoss {
  double total = 0.0;
  double recon = 0.0;  // mean squared error over batch x dims
  double kl = 0.0;     // soft latent KL, before weighting
};

struct LayerGrad {
  Eigen::MatrixXd w;
  Eigen::VectorXd b;
};

// Gradients in canonical layer order: encoder trunk, mu head, logvar head,
// decoder trunk, output.
using VaeGradients = std::vector<LayerGrad>;

struct VaeStep {
  VaeLoss loss;
  VaeGradients grads;
};

// Forward pass only. resp/cluster arguments as in soft_latent_kl; the
// responsibilities and cluster moments are treated as constants.
VaeLoss vae_loss(const MlpVae& vae, const Eigen::MatrixXd& x,
                 const Eigen::MatrixXd& noise, const Eigen::MatrixXd& resp,
                 const Eigen::MatrixXd& cluster_mean,
                 const Eigen::MatrixXd& cluster_var);

VaeStep vae_loss_and_grad(const MlpVae& vae, const Eigen::MatrixXd& x,
                          const Eigen::MatrixXd& noise,
                          const Eigen::MatrixXd& resp,
                          const Eigen::MatrixXd& cluster_mean,
                          const Eigen::MatrixXd& cluster_var);

// One AdamW update: Adam on every parameter, with decoupled weight decay
// applied to weight matrices only, never to biases.
void adamw_step(MlpVae* vae, const VaeGradients& grads);

// Parameters (not moments) as one vector, in canonical layer order with
// row-major weights first and the bias after each weight matrix.
Eigen::VectorXd flatten_vae(const MlpVae& vae);
void unflatten_vae(MlpVae* vae, const Eigen::VectorXd& params);

// Checkpoints are a JSON manifest (config, step counter, tensor shapes)
// next to one binary blob holding every tensor as little-endian float64,
// concatenated in manifest order. The blob file sits beside the manifest
// and is named by the manifest's "blob" entry.
void save_vae(const MlpVae& vae, const std::string& manifest_path);
MlpVae load_vae(const std::string& manifest_path);

}  // namespace dpvae
