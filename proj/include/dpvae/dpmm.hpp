// dpvae/dpmm.hpp

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
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

// Variational inference for a Dirichlet-process mixture of diagonal
// Gaussians.
//
// The mixture weights carry a stick-breaking prior, beta_k ~ Beta(1, alpha),
// pi_k = beta_k * prod_{j<k} (1 - beta_j), truncated at the current number
// of clusters K. Each cluster has an independent Normal-Gamma prior per
// dimension: tau_d ~ Gamma(nu/2, (nu/2) * sF) and mu_d | tau_d ~
// Normal(mu0_d, 1 / (lambda * tau_d)). Everything is conjugate, so the
// variational posterior keeps the same functional form and the global update
// is available in closed form from the batch sufficient statistics.
//
// Fitting alternates:
//   local_step   responsibilities given the current posterior (log domain)
//   summarize    batch sufficient statistics (additive across batches)
//   global_step  closed-form posterior refresh from aggregated statistics
// and elbo() evaluates the variational objective for the same statistics.
// Batch statistics add, so a full pass can be memoized batch by batch and
// aggregated; the result matches a single full pass over the data.

namespace dpvae {

struct DpmmPrior {
  double alpha = 1.0;      // DP concentration
  Eigen::VectorXd mu0;     // prior mean of each cluster, length D
  double lambda_scale = 1.0;  // precision scaling between mean and tau
  double sF = 0.1;         // prior expected observation variance per dim
  double nu = 4.0;         // degrees of freedom; per-dim Gamma shape = nu/2

  int dim() const { return static_cast<int>(mu0.size()); }
  double gamma_shape() const { return 0.5 * nu; }   // a0
  double gamma_rate() const { return 0.5 * nu * sF; }  // b0

  // Throws std::invalid_argument if any hyperparameter is out of range.
  void validate() const;
};

// Posterior Beta(alpha1_k, alpha0_k) over each stick fraction, length K.
struct StickPosterior {
  Eigen::VectorXd alpha1;
  Eigen::VectorXd alpha0;
};

// Per-cluster Normal-Gamma posterior, the diagonal specialization of the
// conjugate Normal-Wishart family. mu_hat/a_hat/b_hat are K x D,
// lambda_hat is one scalar per cluster (shared across dimensions because
// the update adds the same mass to every dimension).
struct NormalGammaPosterior {
  Eigen::MatrixXd mu_hat;
  Eigen::VectorXd lambda_hat;
  Eigen::MatrixXd a_hat;
  Eigen::MatrixXd b_hat;
};

struct DpmmModel {
  DpmmPrior prior;
  StickPosterior stick;
  NormalGammaPosterior ng;
  // Stable identifier per cluster. Identifiers follow a cluster through
  // reorderings, are retired when it is absorbed by a merge, and are never
  // reused within a run.
  std::vector<std::int64_t> component_ids;
  std::int64_t next_component_id = 0;

  int K() const { return static_cast<int>(stick.alpha1.size()); }
  int dim() const { return prior.dim(); }
};

// Batch sufficient statistics. n_hat is the expected member count per
// cluster, s1/s2 the responsibility-weighted first/second moments (K x D).
// entropy is the assignment entropy -sum r log r of the summarized rows and
// count the number of rows. operator+= aggregates per-batch summaries into
// the full-pass statistics.
struct SufficientStats {
  Eigen::VectorXd n_hat;
  Eigen::MatrixXd s1;
  Eigen::MatrixXd s2;
  double entropy = 0.0;
  std::int64_t count = 0;

  SufficientStats& operator+=(const SufficientStats& other);
};

SufficientStats zero_stats(int K, int D);

// Responsibility matrix, one row per data point; rows are simplex points.
using Responsibilities = Eigen::MatrixXd;

// One cluster, stick mass Beta(1, alpha), Normal-Gamma factors equal to the
// prior. The single cluster takes component id 0.
DpmmModel init_model(const DpmmPrior& prior);

// E[log pi_k] under the stick posterior:
//   E[log beta_k] + sum_{j<k} E[log(1 - beta_j)]
// with E[log beta] = psi(alpha1) - psi(alpha1 + alpha0) and the complement
// analogously. Entries are strictly decreasing pointwise in the tail sums,
// and always negative.
Eigen::VectorXd expected_log_pi(const StickPosterior& stick);

// E_q[log Normal(x | mu_k, diag(tau_k)^-1)] for one point and one cluster:
//   .5 * sum_d ( E[log tau_d] - log 2 pi
//                - E[tau_d] (x_d - mu_hat_d)^2 - 1 / lambda_hat )
// with E[log tau] = psi(a_hat) - log b_hat and E[tau] = a_hat / b_hat.
double expected_log_lik(const Eigen::VectorXd& x, const DpmmModel& model,
                        int k);

// Soft assignments for a batch (rows of `batch`): log r_nk = E[log pi_k] +
// E[log lik_nk], normalized per row through log_sum_exp. Never leaves the
// log domain before normalization.
Responsibilities local_step(const Eigen::MatrixXd& batch,
                            const DpmmModel& model);

// Batch sufficient statistics for given responsibilities. Responsibilities
// below 1e-12 are clamped inside the entropy term only.
SufficientStats summarize(const Eigen::MatrixXd& batch,
                          const Responsibilities& resp);

// Closed-form conjugate refresh of stick and Normal-Gamma posteriors from
// aggregated statistics. Clusters with (numerically) zero mass fall back to
// the prior exactly.
DpmmModel global_step(const DpmmModel& model, const SufficientStats& stats);

// Variational objective for the model and aggregated statistics:
//   sum_k [ data_k + n_hat_k E[log pi_k] ] + entropy
//   - sum_k KL(Beta_k || Beta(1, alpha)) - sum_k KL(NormalGamma_k || prior)
// where data_k is E_q[log lik] accumulated from the statistics. Computed in
// closed form; a fresh model with empty statistics scores exactly zero.
double elbo(const DpmmModel& model, const SufficientStats& stats);

// Responsibilities of a single point (a one-row local_step).
Eigen::VectorXd soft_assign(const Eigen::VectorXd& z, const DpmmModel& model);

// Posterior predictive moments of cluster k: mean mu_hat_k and per-dim
// variance b_hat / (a_hat - 1). Throws std::domain_error if a_hat <= 1
// (the expected variance is undefined there).
struct ClusterMoments {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
};
ClusterMoments cluster_moments(const DpmmModel& model, int k);

// Checkpointing. JSON with explicit shapes; doubles are emitted with enough
// digits to round-trip bit-exactly.
std::string model_to_json(const DpmmModel& model);
DpmmModel model_from_json(const std::string& text);
void save_model(const std::filesystem::path& path, const DpmmModel& model);
DpmmModel load_model(const std::filesystem::path& path);

}  // namespace dpvae
