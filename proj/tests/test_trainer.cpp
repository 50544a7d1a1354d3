// dpvae/tests/test_trainer.cpp

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "dpvae/metrics.hpp"
#include "dpvae/trainer.hpp"
#include "support/test_helpers.hpp"

using namespace dpvae;
using test_util::make_prior;

namespace {

// A small but complete experiment description around 2-D data.
ExperimentConfig toy_experiment(int latent_dim, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.dataset_path = "synthetic";
  cfg.dataset_format = "csv";
  cfg.vae.input_dim = 2;
  cfg.vae.hidden_dims = {16};
  cfg.vae.latent_dim = latent_dim;
  cfg.vae.output_activation = "linear";
  cfg.vae.kld_weight = 1e-3;
  cfg.vae.batch_size = 64;
  cfg.prior = make_prior(latent_dim);
  cfg.moves.min_atoms_new_comp = 40;
  cfg.moves.min_atoms_target_comp = 50;
  cfg.moves.min_atoms_retain_comp = 50;
  cfg.moves.fresh_k = 4;
  cfg.moves.max_subsample = 2000;
  cfg.seed = seed;
  cfg.dpmm_steps = 5;
  cfg.max_epochs = 10;
  return cfg;
}

std::vector<Eigen::VectorXd> circle_centers(int count, double radius) {
  std::vector<Eigen::VectorXd> centers;
  for (int c = 0; c < count; ++c) {
    Eigen::VectorXd v(2);
    const double angle = 2.0 * M_PI * c / count;
    v << radius * std::cos(angle), radius * std::sin(angle);
    centers.push_back(v);
  }
  return centers;
}

std::vector<std::int64_t> blob_labels(int blobs, int per_blob) {
  std::vector<std::int64_t> labels;
  for (int b = 0; b < blobs; ++b) {
    labels.insert(labels.end(), per_blob, b);
  }
  return labels;
}

// Fills the latent buffer directly, bypassing the encoder, so the mixture
// update can be exercised on known geometry.
TrainState state_with_buffer(const ExperimentConfig& cfg,
                             const Eigen::MatrixXd& z) {
  TrainState state = init_state(cfg);
  std::vector<std::int64_t> src(static_cast<std::size_t>(z.rows()));
  std::iota(src.begin(), src.end(), 0);
  state.buffer.append(z, src);
  state.epoch = 1;  // pretend one epoch filled the buffer
  return state;
}

std::vector<std::int64_t> buffer_assignments(const DpmmModel& model,
                                             const Eigen::MatrixXd& z) {
  const Responsibilities resp = local_step(z, model);
  std::vector<std::int64_t> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::Index k = 0;
    resp.row(i).maxCoeff(&k);
    out[static_cast<std::size_t>(i)] = model.component_ids[k];
  }
  return out;
}

}  // namespace

TEST_CASE("the latent buffer grows and clears") {
  LatentBuffer buffer;
  buffer.rows.resize(0, 3);
  Eigen::MatrixXd z1 = Eigen::MatrixXd::Constant(2, 3, 1.0);
  Eigen::MatrixXd z2 = Eigen::MatrixXd::Constant(3, 3, 2.0);
  buffer.append(z1, {4, 5});
  buffer.append(z2, {0, 1, 2});
  REQUIRE(buffer.size() == 5);
  CHECK(buffer.rows(0, 0) == 1.0);
  CHECK(buffer.rows(4, 2) == 2.0);
  CHECK(buffer.source_indices == std::vector<std::int64_t>{4, 5, 0, 1, 2});

  CHECK_THROWS_AS(buffer.append(z1, {1}), std::invalid_argument);
  Eigen::MatrixXd wide(1, 4);
  wide.setZero();
  CHECK_THROWS_AS(buffer.append(wide, {0}), std::invalid_argument);

  buffer.clear();
  CHECK(buffer.size() == 0);
  CHECK(buffer.source_indices.empty());
}

TEST_CASE("one epoch takes ceil(n / B) steps and buffers every row") {
  ExperimentConfig cfg = toy_experiment(2, 7);
  TrainState state = init_state(cfg);
  std::mt19937_64 data_rng(11);
  Eigen::MatrixXd x = test_util::random_blobs(
      data_rng, circle_centers(2, 4.0), 64, 1.0);  // 128 rows
  REQUIRE(x.rows() == 128);

  run_epoch(&state, x, cfg);
  CHECK(state.vae.adam_step == 2);  // exactly two optimizer steps
  CHECK(state.buffer.size() == 128);
  CHECK(state.epoch == 1);

  // A 130-row set adds one remainder batch.
  Eigen::MatrixXd x2(130, 2);
  x2.topRows(128) = x;
  x2.bottomRows(2) = x.topRows(2);
  TrainState state2 = init_state(cfg);
  run_epoch(&state2, x2, cfg);
  CHECK(state2.vae.adam_step == 3);
  CHECK(state2.buffer.size() == 130);
}

TEST_CASE("identical seeds give identical epochs") {
  ExperimentConfig cfg = toy_experiment(2, 99);
  std::mt19937_64 data_rng(13);
  Eigen::MatrixXd x = test_util::random_blobs(
      data_rng, circle_centers(3, 5.0), 40, 1.0);

  TrainState a = init_state(cfg);
  TrainState b = init_state(cfg);
  run_epoch(&a, x, cfg);
  run_epoch(&b, x, cfg);
  CHECK(flatten_vae(a.vae) == flatten_vae(b.vae));
  CHECK(a.buffer.rows == b.buffer.rows);
  CHECK(a.last_epoch_recon == b.last_epoch_recon);
  CHECK(a.last_epoch_kl == b.last_epoch_kl);
}

TEST_CASE("buffer rows replay as sample_latent(encode(x)) in shuffle order") {
  ExperimentConfig cfg = toy_experiment(2, 31);
  TrainState state = init_state(cfg);
  std::mt19937_64 data_rng(17);
  Eigen::MatrixXd x = test_util::random_blobs(
      data_rng, circle_centers(2, 3.0), 50, 1.0);  // 100 rows, 2 batches

  // Clone the generator and the pristine encoder before the epoch runs.
  std::mt19937_64 replay_rng = state.rng;
  const MlpVae frozen_start = state.vae;

  run_epoch(&state, x, cfg);

  // Replay the documented draw order: one shuffle of the row indices, then
  // per batch a row-major block of standard-normal noise.
  std::vector<std::int64_t> order(x.rows());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), replay_rng);
  std::normal_distribution<double> gauss(0.0, 1.0);
  MlpVae vae = frozen_start;
  Eigen::Index at = 0;
  for (Eigen::Index start = 0; start < x.rows(); start += 64) {
    const Eigen::Index b = std::min<Eigen::Index>(64, x.rows() - start);
    Eigen::MatrixXd xb(b, 2), noise(b, 2);
    for (Eigen::Index i = 0; i < b; ++i) {
      xb.row(i) = x.row(order[start + i]);
    }
    for (Eigen::Index i = 0; i < b; ++i) {
      for (int d = 0; d < 2; ++d) noise(i, d) = gauss(replay_rng);
    }
    const Eigen::MatrixXd z = sample_latent(vae_encode(vae, xb), noise);
    for (Eigen::Index i = 0; i < b; ++i, ++at) {
      CHECK(state.buffer.rows.row(at) == z.row(i));
      CHECK(state.buffer.source_indices[static_cast<std::size_t>(at)] ==
            order[start + i]);
    }
    // Advance the replayed encoder exactly like the real epoch did.
    const Responsibilities resp = local_step(z, state.dpmm);
    const MomentMatrices moments = cluster_moment_matrices(state.dpmm);
    VaeStep step =
        vae_loss_and_grad(vae, xb, noise, resp, moments.mean, moments.var);
    adamw_step(&vae, step.grads);
  }
  CHECK(at == state.buffer.size());
  CHECK(flatten_vae(vae) == flatten_vae(state.vae));
}

TEST_CASE("run_epoch never touches the mixture, update_dpmm never touches the encoder") {
  ExperimentConfig cfg = toy_experiment(2, 41);
  TrainState state = init_state(cfg);
  std::mt19937_64 data_rng(19);
  Eigen::MatrixXd x = test_util::random_blobs(
      data_rng, circle_centers(3, 6.0), 60, 1.0);

  const std::string dpmm_before = model_to_json(state.dpmm);
  run_epoch(&state, x, cfg);
  CHECK(model_to_json(state.dpmm) == dpmm_before);

  const Eigen::VectorXd vae_before = flatten_vae(state.vae);
  update_dpmm(&state, 3, cfg);
  CHECK(flatten_vae(state.vae) == vae_before);
  CHECK(model_to_json(state.dpmm) != dpmm_before);
}

TEST_CASE("update_dpmm with zero steps only drains the buffer") {
  ExperimentConfig cfg = toy_experiment(2, 43);
  std::mt19937_64 data_rng(23);
  Eigen::MatrixXd z = test_util::random_blobs(
      data_rng, circle_centers(2, 5.0), 60, 1.0);
  TrainState state = state_with_buffer(cfg, z);

  const std::string before = model_to_json(state.dpmm);
  update_dpmm(&state, 0, cfg);
  CHECK(model_to_json(state.dpmm) == before);
  CHECK(state.buffer.size() == 0);
  CHECK(state.moves.empty());
  CHECK(state.last_update_elbos.empty());
}

TEST_CASE("update_dpmm on an empty buffer is a no-op") {
  ExperimentConfig cfg = toy_experiment(2, 47);
  TrainState state = init_state(cfg);
  const std::string before = model_to_json(state.dpmm);
  update_dpmm(&state, 5, cfg);
  CHECK(model_to_json(state.dpmm) == before);
  CHECK(state.moves.empty());
}

TEST_CASE("ten steps on three separated blobs recover the blob structure") {
  ExperimentConfig cfg = toy_experiment(2, 53);
  std::mt19937_64 data_rng(29);
  const int per_blob = 150;
  Eigen::MatrixXd z = test_util::random_blobs(
      data_rng, circle_centers(3, 10.0), per_blob, 1.0);
  TrainState state = state_with_buffer(cfg, z);
  REQUIRE(state.dpmm.K() == 1);

  update_dpmm(&state, 10, cfg);
  CHECK(state.buffer.size() == 0);
  CHECK(state.dpmm.K() >= 3);

  const double acc = clustering_accuracy(
      {buffer_assignments(state.dpmm, z), blob_labels(3, per_blob)});
  CHECK(acc >= 0.95);

  // Every accepted move raised its own objective.
  int accepted = 0;
  for (const MoveRecord& rec : state.moves) {
    CHECK(rec.epoch == 0);
    CHECK(rec.step >= 0);
    if (rec.accepted) {
      ++accepted;
      CHECK(rec.elbo_after >=
            rec.elbo_before - 1e-9 * std::max(1.0, std::abs(rec.elbo_before)));
    }
  }
  CHECK(accepted >= 1);  // at least the birth that moved K off 1
}

TEST_CASE("disabling moves leaves pure coordinate ascent") {
  ExperimentConfig cfg = toy_experiment(2, 57);
  cfg.moves_enabled = false;
  std::mt19937_64 data_rng(37);
  const int per_blob = 150;
  Eigen::MatrixXd z = test_util::random_blobs(
      data_rng, circle_centers(3, 10.0), per_blob, 1.0);
  TrainState state = state_with_buffer(cfg, z);
  REQUIRE(state.dpmm.K() == 1);

  update_dpmm(&state, 10, cfg);
  // No proposals of any kind, so the single seed component survives and
  // the per-step ELBO is monotone everywhere.
  CHECK(state.moves.empty());
  CHECK(state.dpmm.K() == 1);
  REQUIRE(state.last_update_elbos.size() == 10);
  for (std::size_t t = 0; t + 1 < state.last_update_elbos.size(); ++t) {
    const double prev = state.last_update_elbos[t];
    CHECK(state.last_update_elbos[t + 1] >=
          prev - 1e-9 * std::max(1.0, std::abs(prev)));
  }
}

TEST_CASE("per-update ELBO steps never fall outside accepted moves") {
  ExperimentConfig cfg = toy_experiment(2, 59);
  std::mt19937_64 data_rng(31);
  Eigen::MatrixXd z = test_util::random_blobs(
      data_rng, circle_centers(4, 9.0), 120, 1.0);
  TrainState state = state_with_buffer(cfg, z);
  update_dpmm(&state, 8, cfg);

  // Steps where some move was accepted may jump discontinuously.
  std::vector<bool> move_at_step(8, false);
  for (const MoveRecord& rec : state.moves) {
    if (rec.accepted && rec.step >= 0 && rec.step < 8) {
      move_at_step[static_cast<std::size_t>(rec.step)] = true;
    }
  }
  REQUIRE(state.last_update_elbos.size() == 8);
  for (std::size_t t = 0; t + 1 < state.last_update_elbos.size(); ++t) {
    if (move_at_step[t + 1]) continue;
    const double prev = state.last_update_elbos[t];
    CHECK(state.last_update_elbos[t + 1] >=
          prev - 1e-6 * std::max(1.0, std::abs(prev)));
  }
}

TEST_CASE("a second update on the same buffer accepts no births") {
  ExperimentConfig cfg = toy_experiment(2, 61);
  std::mt19937_64 data_rng(37);
  Eigen::MatrixXd z = test_util::random_blobs(
      data_rng, circle_centers(3, 10.0), 150, 1.0);

  TrainState state = state_with_buffer(cfg, z);
  update_dpmm(&state, 10, cfg);
  const std::size_t first_moves = state.moves.size();
  const int k_settled = state.dpmm.K();

  // Warm start on statistically identical material.
  std::vector<std::int64_t> src(static_cast<std::size_t>(z.rows()));
  std::iota(src.begin(), src.end(), 0);
  state.buffer.append(z, src);
  update_dpmm(&state, 10, cfg);

  CHECK(state.dpmm.K() == k_settled);
  for (std::size_t i = first_moves; i < state.moves.size(); ++i) {
    if (state.moves[i].kind == MoveKind::kBirth) {
      CHECK_FALSE(state.moves[i].accepted);
    }
  }
}

TEST_CASE("train with zero epochs returns a fresh state and no history") {
  ExperimentConfig cfg = toy_experiment(2, 67);
  cfg.max_epochs = 0;
  Dataset data;
  std::mt19937_64 data_rng(41);
  data.features = test_util::random_blobs(data_rng, circle_centers(2, 4.0),
                                          30, 1.0);
  TrainResult result = train(data, cfg);
  CHECK(result.history.empty());
  CHECK(result.state.epoch == 0);
  CHECK(result.state.dpmm.K() == 1);
  CHECK(result.state.vae.adam_step == 0);
}

TEST_CASE("twenty epochs separate five blobs end to end") {
  ExperimentConfig cfg = toy_experiment(2, 71);
  cfg.max_epochs = 20;
  cfg.vae.hidden_dims = {32};
  cfg.vae.learning_rate = 3e-3;

  std::mt19937_64 data_rng(43);
  const int per_blob = 200;
  Dataset data;
  data.features = test_util::random_blobs(
      data_rng, circle_centers(5, 2.0), per_blob, 0.15);
  data.labels = blob_labels(5, per_blob);
  data.class_ids = {0, 1, 2, 3, 4};

  TrainResult result = train(data, cfg);
  REQUIRE(result.history.size() == 20);
  const MetricsRecord& last = result.history.back();
  CHECK(last.epoch == 19);
  CHECK(last.K >= 5);
  CHECK(last.K <= 12);
  CHECK(last.acc >= 0.95);
  CHECK(std::isfinite(last.elbo));
  CHECK(last.recon_loss > 0.0);
  CHECK(last.seconds == 0.0);  // timing off by default

  // The epoch counter and assignment sizes stay coherent.
  CHECK(result.state.epoch == 20);
  const std::vector<std::int64_t> assign =
      assign_clusters(result.state.vae, result.state.dpmm, data.features);
  CHECK(assign.size() == static_cast<std::size_t>(data.features.rows()));
}

TEST_CASE("fit_dpmm clusters raw features with the same move schedule") {
  ExperimentConfig cfg = toy_experiment(2, 73);
  cfg.max_epochs = 10;
  std::mt19937_64 data_rng(47);
  const int per_blob = 150;
  Dataset data;
  data.features = test_util::random_blobs(
      data_rng, circle_centers(3, 10.0), per_blob, 1.0);
  data.labels = blob_labels(3, per_blob);
  data.class_ids = {0, 1, 2};

  TrainResult result = fit_dpmm(data, cfg);
  REQUIRE(result.history.size() == 10);
  const MetricsRecord& last = result.history.back();
  CHECK(last.K >= 3);
  CHECK(last.K <= 8);
  CHECK(last.acc >= 0.95);
  CHECK(std::isnan(last.recon_loss));  // no auto-encoder in this mode

  Dataset wide;
  wide.features = Eigen::MatrixXd::Zero(10, 5);
  CHECK_THROWS_AS(fit_dpmm(wide, cfg), std::invalid_argument);
}

TEST_CASE("metrics and move logs serialize deterministically") {
  std::vector<MetricsRecord> history(2);
  history[0] = {0, 3, -123.456, 0.25, 1.5, 0.97, 0.0};
  history[1].epoch = 1;
  history[1].K = 4;
  history[1].elbo = -100.0;
  history[1].recon_loss = 0.125;
  history[1].kl_loss = 1.25;
  // history[1].acc stays NaN
  const std::string path = "metrics_test.csv";
  write_metrics_csv(path, history);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  in.close();
  const std::string text = ss.str();
  CHECK(text.find("epoch,K,elbo,recon_loss,kl_loss,acc,seconds\n") == 0);
  CHECK(text.find("0,3,-123.456") != std::string::npos);
  CHECK(text.find("nan") != std::string::npos);

  write_metrics_csv(path, history);
  std::ifstream in2(path);
  std::stringstream ss2;
  ss2 << in2.rdbuf();
  in2.close();
  CHECK(ss2.str() == text);
  std::remove(path.c_str());

  MoveLog log(1);
  log[0].kind = MoveKind::kMerge;
  log[0].accepted = true;
  log[0].clusters_involved = {2, 5};
  const std::string log_path = "moves_test.jsonl";
  write_move_log(log_path, log);
  std::ifstream lin(log_path);
  std::string line;
  REQUIRE(std::getline(lin, line));
  CHECK(line.find("\"merge\"") != std::string::npos);
  CHECK(line.find("\"accepted\":true") != std::string::npos);
  std::string extra;
  CHECK_FALSE(std::getline(lin, extra));  // exactly one record, one line
  lin.close();
  std::remove(log_path.c_str());
}
