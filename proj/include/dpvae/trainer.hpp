// dpvae/trainer.hpp

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
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dpvae/config.hpp"
#include "dpvae/dataset.hpp"
#include "dpvae/dpmm.hpp"
#include "dpvae/mlp_vae.hpp"
#include "dpvae/moves.hpp"

// The alternating training loop: VAE epochs stream sampled latents into a
// buffer, and at each epoch boundary the mixture model is refreshed from
// that buffer for a fixed number of steps with birth/merge/shuffle moves.
// The auto-encoder only changes inside run_epoch and the mixture only
// inside update_dpmm.

namespace dpvae {

// Latent samples gathered during one epoch, alongside the dataset row each
// came from. Emptied after every mixture update.
struct LatentBuffer {
  Eigen::MatrixXd rows;
  std::vector<std::int64_t> source_indices;

  Eigen::Index size() const { return rows.rows(); }
  void clear();
  void append(const Eigen::MatrixXd& z, const std::vector<std::int64_t>& src);
};

// One line of the metrics stream. acc is NaN when the data has no labels;
// seconds is 0 unless timing is recorded.
struct MetricsRecord {
  int epoch = 0;
  int K = 0;
  double elbo = 0.0;
  double recon_loss = 0.0;
  double kl_loss = 0.0;
  double acc = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
};

struct TrainState {
  int epoch = 0;
  MlpVae vae;
  DpmmModel dpmm;
  LatentBuffer buffer;
  MoveLog moves;
  std::mt19937_64 rng;

  // Scratch filled by the two phases and consumed by metrics emission.
  double last_epoch_recon = 0.0;
  double last_epoch_kl = 0.0;
  double last_elbo = 0.0;
  std::vector<double> last_update_elbos;  // one entry per update step
};

// Fresh state: seeded rng, initialized auto-encoder, single-cluster prior
// model. cfg.vae.input_dim must be set and cfg.prior sized to latent_dim.
TrainState init_state(const ExperimentConfig& cfg);

// Cluster moments of every cluster stacked into K x D matrices, the form
// the VAE loss consumes.
struct MomentMatrices {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd var;
};
MomentMatrices cluster_moment_matrices(const DpmmModel& model);

// One pass over the features in shuffled mini-batches: encode, sample a
// latent row into the buffer, soft-assign against the fixed mixture, and
// take one AdamW step. Increments the epoch counter. Throws
// std::runtime_error if a loss turns non-finite.
void run_epoch(TrainState* state, const Eigen::MatrixXd& features,
               const ExperimentConfig& cfg);

// `steps` rounds of memoized coordinate ascent over the buffer, each round
// making one birth attempt followed by merge passes (plus gated shuffle).
// Setting cfg.moves_enabled = false skips all proposals, leaving pure
// ascent for ablation runs. Warm-starts from the current model and clears
// the buffer, which also happens when steps = 0. An empty buffer is a
// no-op with a warning.
void update_dpmm(TrainState* state, int steps, const ExperimentConfig& cfg);

// Deterministic evaluation assignments: encoder means, soft-assigned, then
// argmax, reported as stable component ids.
std::vector<std::int64_t> assign_clusters(const MlpVae& vae,
                                          const DpmmModel& model,
                                          const Eigen::MatrixXd& features);

struct TrainResult {
  TrainState state;
  std::vector<MetricsRecord> history;
};

// Full alternation for cfg.max_epochs epochs, re-filtering by the class
// schedule at each epoch start when one is configured. One metrics record
// per epoch. Checkpoints land in cfg.output_dir every
// cfg.checkpoint_interval epochs when that is positive.
TrainResult train(const Dataset& data, const ExperimentConfig& cfg);

// Mixture-only fit: every epoch fills the buffer with the raw feature rows
// and runs update_dpmm, so the same move schedule applies without any
// auto-encoder. Requires cfg.vae.latent_dim (and the prior) to match the
// feature width.
TrainResult fit_dpmm(const Dataset& data, const ExperimentConfig& cfg);

// The metrics stream as CSV: header epoch,K,elbo,recon_loss,kl_loss,acc,
// seconds, doubles printed with round-trip precision.
void write_metrics_csv(const std::string& path,
                       const std::vector<MetricsRecord>& history);

// One JSON object per line, in move order.
void write_move_log(const std::string& path, const MoveLog& log);

}  // namespace dpvae
