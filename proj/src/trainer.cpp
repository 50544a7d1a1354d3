// dpvae/trainer.cpp

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

#include "dpvae/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <stdexcept>
#include <utility>

#include "dpvae/metrics.hpp"

namespace dpvae {

void LatentBuffer::clear() {
  rows.resize(0, rows.cols());
  source_indices.clear();
}

void LatentBuffer::append(const Eigen::MatrixXd& z,
                          const std::vector<std::int64_t>& src) {
  if (z.rows() != static_cast<Eigen::Index>(src.size())) {
    throw std::invalid_argument("LatentBuffer: rows and indices disagree");
  }
  if (rows.rows() > 0 && rows.cols() != z.cols()) {
    throw std::invalid_argument("LatentBuffer: latent width changed");
  }
  const Eigen::Index old = rows.rows();
  rows.conservativeResize(old + z.rows(), z.cols());
  rows.bottomRows(z.rows()) = z;
  source_indices.insert(source_indices.end(), src.begin(), src.end());
}

TrainState init_state(const ExperimentConfig& cfg) {
  if (cfg.vae.input_dim <= 0) {
    throw std::invalid_argument("init_state: vae.input_dim must be set");
  }
  if (cfg.prior.dim() != cfg.vae.latent_dim) {
    throw std::invalid_argument(
        "init_state: prior dimension must equal vae.latent_dim");
  }
  TrainState state;
  state.rng.seed(cfg.seed);
  state.vae = init_vae(cfg.vae, state.rng);
  state.dpmm = init_model(cfg.prior);
  state.buffer.rows.resize(0, cfg.vae.latent_dim);
  return state;
}

MomentMatrices cluster_moment_matrices(const DpmmModel& model) {
  MomentMatrices out;
  out.mean.resize(model.K(), model.dim());
  out.var.resize(model.K(), model.dim());
  for (int k = 0; k < model.K(); ++k) {
    const ClusterMoments m = cluster_moments(model, k);
    out.mean.row(k) = m.mean.transpose();
    out.var.row(k) = m.var.transpose();
  }
  return out;
}

void run_epoch(TrainState* state, const Eigen::MatrixXd& features,
               const ExperimentConfig& cfg) {
  const Eigen::Index n = features.rows();
  if (n == 0) {
    throw std::invalid_argument("run_epoch: empty dataset");
  }
  if (features.cols() != state->vae.config.input_dim) {
    throw std::invalid_argument("run_epoch: feature width mismatch");
  }
  const Eigen::Index batch = cfg.vae.batch_size;
  const int latent = state->vae.config.latent_dim;

  // The mixture is frozen for the whole epoch, so its moments are too.
  const MomentMatrices moments = cluster_moment_matrices(state->dpmm);

  std::vector<std::int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), state->rng);
  std::normal_distribution<double> gauss(0.0, 1.0);

  double recon_sum = 0.0;
  double kl_sum = 0.0;
  int steps = 0;
  for (Eigen::Index start = 0; start < n; start += batch) {
    const Eigen::Index b = std::min(batch, n - start);
    Eigen::MatrixXd x(b, features.cols());
    std::vector<std::int64_t> src(static_cast<std::size_t>(b));
    for (Eigen::Index i = 0; i < b; ++i) {
      x.row(i) = features.row(static_cast<Eigen::Index>(order[start + i]));
      src[static_cast<std::size_t>(i)] = order[start + i];
    }
    Eigen::MatrixXd noise(b, latent);
    for (Eigen::Index i = 0; i < b; ++i) {
      for (int d = 0; d < latent; ++d) noise(i, d) = gauss(state->rng);
    }

    const EncodeResult enc = vae_encode(state->vae, x);
    const Eigen::MatrixXd z = sample_latent(enc, noise);
    state->buffer.append(z, src);

    const Responsibilities resp = local_step(z, state->dpmm);
    const VaeStep step = vae_loss_and_grad(state->vae, x, noise, resp,
                                           moments.mean, moments.var);
    if (!std::isfinite(step.loss.total)) {
      throw std::runtime_error("run_epoch: non-finite loss at epoch " +
                               std::to_string(state->epoch));
    }
    adamw_step(&state->vae, step.grads);
    recon_sum += step.loss.recon;
    kl_sum += step.loss.kl;
    ++steps;
  }
  state->last_epoch_recon = recon_sum / steps;
  state->last_epoch_kl = kl_sum / steps;
  ++state->epoch;
}

namespace {

struct BufferPass {
  Responsibilities resp;
  SufficientStats stats;
};

// Full pass assembled from per-batch summaries; the statistics aggregate
// batch by batch exactly as they would stream in.
BufferPass batched_pass(const Eigen::MatrixXd& z, const DpmmModel& model,
                        Eigen::Index batch) {
  BufferPass out;
  out.resp.resize(z.rows(), model.K());
  out.stats = zero_stats(model.K(), model.dim());
  for (Eigen::Index start = 0; start < z.rows(); start += batch) {
    const Eigen::Index b = std::min(batch, z.rows() - start);
    const Eigen::MatrixXd chunk = z.middleRows(start, b);
    const Responsibilities resp = local_step(chunk, model);
    out.resp.middleRows(start, b) = resp;
    out.stats += summarize(chunk, resp);
  }
  return out;
}

// Fallback birth material when too few rows fit poorly: the rows owned by
// the heaviest cluster, provided it is heavy enough to split.
Eigen::MatrixXd targeted_subsample(const Eigen::MatrixXd& z,
                                   const Responsibilities& resp,
                                   const SufficientStats& stats,
                                   const MoveConfig& cfg) {
  Eigen::Index big = 0;
  stats.n_hat.maxCoeff(&big);
  if (stats.n_hat(big) < static_cast<double>(cfg.min_atoms_target_comp)) {
    return Eigen::MatrixXd(0, z.cols());
  }
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::Index k = 0;
    resp.row(i).maxCoeff(&k);
    if (k == big) {
      keep.push_back(i);
      if (static_cast<int>(keep.size()) >= cfg.max_subsample) break;
    }
  }
  if (static_cast<int>(keep.size()) < cfg.min_atoms_new_comp) {
    return Eigen::MatrixXd(0, z.cols());
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(keep.size()), z.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = z.row(keep[i]);
  }
  return out;
}

bool is_identity(const std::vector<int>& perm) {
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] != static_cast<int>(i)) return false;
  }
  return true;
}

}  // namespace

void update_dpmm(TrainState* state, int steps, const ExperimentConfig& cfg) {
  state->last_update_elbos.clear();
  if (state->buffer.size() == 0) {
    std::cerr << "update_dpmm: latent buffer is empty, skipping\n";
    return;
  }
  const Eigen::MatrixXd z = state->buffer.rows;
  const Eigen::Index batch = cfg.vae.batch_size;
  // Moves are tagged with the zero-based epoch whose latents they consume,
  // which is the one the epoch counter just moved past.
  const int epoch_tag = state->epoch - 1;
  DpmmModel model = state->dpmm;

  for (int t = 0; t < steps; ++t) {
    BufferPass pass = batched_pass(z, model, batch);
    model = global_step(model, pass.stats);
    bool moved = false;

    // One birth attempt per step: poor fits first, otherwise material
    // carved from the heaviest cluster.
    if (cfg.moves_enabled) {
      Eigen::MatrixXd subsample = collect_poor_fits(z, pass.resp, cfg.moves);
      if (subsample.rows() == 0) {
        subsample = targeted_subsample(z, pass.resp, pass.stats, cfg.moves);
      }
      BirthResult birth = birth_move(model, subsample, pass.stats, cfg.moves);
      birth.record.epoch = epoch_tag;
      birth.record.step = t;
      state->moves.push_back(birth.record);
      if (birth.record.accepted) {
        moved = true;
        model = std::move(birth.model);
        // Refresh allocations so the merge pass below sees real masses for
        // the new clusters.
        pass = batched_pass(z, model, batch);
        model = global_step(model, pass.stats);
      }
    }

    if (cfg.moves_enabled) {
      MergeResult merged = merge_move(model, pass.stats, cfg.moves);
      for (MoveRecord rec : merged.records) {
        rec.epoch = epoch_tag;
        rec.step = t;
        if (rec.accepted) moved = true;
        state->moves.push_back(rec);
      }
      model = std::move(merged.model);
      pass.stats = std::move(merged.stats);
    }

    if (cfg.moves_enabled && cfg.moves.shuffle_enabled) {
      ShuffleResult sh = shuffle_move(model, pass.stats);
      if (!is_identity(sh.permutation)) {
        MoveRecord rec;
        rec.kind = MoveKind::kShuffle;
        rec.elbo_before = elbo(model, pass.stats);
        rec.elbo_after = elbo(sh.model, sh.stats);
        for (int p : sh.permutation) {
          rec.clusters_involved.push_back(model.component_ids[p]);
        }
        // The reorder should never hurt the objective; gate it anyway so a
        // numerically bad permutation cannot slip through.
        rec.accepted = rec.elbo_after >=
                       rec.elbo_before -
                           1e-9 * std::max(1.0, std::abs(rec.elbo_before));
        rec.epoch = epoch_tag;
        rec.step = t;
        if (rec.accepted) {
          moved = true;
          model = std::move(sh.model);
          pass.stats = std::move(sh.stats);
        }
        state->moves.push_back(rec);
      }
    }

    // An accepted move leaves the statistics on a folded, approximate basis.
    // Re-sweep so the recorded step value is an exact coordinate-ascent ELBO;
    // steps without moves then satisfy the monotone-trend property against
    // their predecessor whatever happened before it.
    if (moved) {
      pass = batched_pass(z, model, batch);
      model = global_step(model, pass.stats);
    }
    state->last_update_elbos.push_back(elbo(model, pass.stats));
  }

  state->dpmm = std::move(model);
  if (!state->last_update_elbos.empty()) {
    state->last_elbo = state->last_update_elbos.back();
  }
  state->buffer.clear();
}

std::vector<std::int64_t> assign_clusters(const MlpVae& vae,
                                          const DpmmModel& model,
                                          const Eigen::MatrixXd& features) {
  const EncodeResult enc = vae_encode(vae, features);
  const Responsibilities resp = local_step(enc.mu, model);
  std::vector<std::int64_t> out(static_cast<std::size_t>(resp.rows()));
  for (Eigen::Index i = 0; i < resp.rows(); ++i) {
    Eigen::Index k = 0;
    resp.row(i).maxCoeff(&k);
    out[static_cast<std::size_t>(i)] = model.component_ids[k];
  }
  return out;
}

namespace {

void write_checkpoints(const TrainState& state, const std::string& dir,
                       int epoch) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  char tag[32];
  std::snprintf(tag, sizeof(tag), "epoch_%04d", epoch);
  save_vae(state.vae, dir + "/checkpoint_" + tag + ".vae.json");
  save_model(dir + "/checkpoint_" + tag + ".dpmm.json", state.dpmm);
}

MetricsRecord epoch_metrics(const TrainState& state, const Dataset& active,
                            int epoch, bool with_vae) {
  MetricsRecord rec;
  rec.epoch = epoch;
  rec.K = state.dpmm.K();
  rec.elbo = state.last_elbo;
  rec.recon_loss = state.last_epoch_recon;
  rec.kl_loss = state.last_epoch_kl;
  if (active.has_labels()) {
    std::vector<std::int64_t> assignments;
    if (with_vae) {
      assignments = assign_clusters(state.vae, state.dpmm, active.features);
    } else {
      const Responsibilities resp = local_step(active.features, state.dpmm);
      assignments.resize(static_cast<std::size_t>(resp.rows()));
      for (Eigen::Index i = 0; i < resp.rows(); ++i) {
        Eigen::Index k = 0;
        resp.row(i).maxCoeff(&k);
        assignments[static_cast<std::size_t>(i)] =
            state.dpmm.component_ids[k];
      }
    }
    rec.acc = clustering_accuracy({assignments, active.labels});
  }
  return rec;
}

}  // namespace

TrainResult train(const Dataset& data, const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  cfg.validate();
  if (data.features.rows() == 0) {
    throw std::invalid_argument("train: empty dataset");
  }
  if (cfg.vae.input_dim == 0) {
    cfg.vae.input_dim = static_cast<int>(data.features.cols());
  } else if (cfg.vae.input_dim != data.features.cols()) {
    throw std::invalid_argument("train: vae.input_dim disagrees with data");
  }
  if (cfg.schedule && !data.has_labels()) {
    throw std::invalid_argument("train: a class schedule needs labels");
  }

  TrainResult out{init_state(cfg), {}};
  for (int e = 0; e < cfg.max_epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    Dataset filtered;
    const Dataset* active = &data;
    if (cfg.schedule) {
      filtered = apply_schedule(data, *cfg.schedule, e);
      if (filtered.rows() == 0) {
        throw std::runtime_error("train: schedule leaves no rows at epoch " +
                                 std::to_string(e));
      }
      active = &filtered;
    }
    run_epoch(&out.state, active->features, cfg);
    update_dpmm(&out.state, cfg.dpmm_steps, cfg);

    MetricsRecord rec = epoch_metrics(out.state, *active, e, true);
    if (cfg.record_timing) {
      rec.seconds = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    }
    out.history.push_back(rec);

    if (cfg.checkpoint_interval > 0 &&
        (e + 1) % cfg.checkpoint_interval == 0) {
      write_checkpoints(out.state, cfg.output_dir, e);
    }
  }
  return out;
}

TrainResult fit_dpmm(const Dataset& data, const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  cfg.validate();
  if (data.features.rows() == 0) {
    throw std::invalid_argument("fit_dpmm: empty dataset");
  }
  if (cfg.prior.dim() != data.features.cols()) {
    throw std::invalid_argument(
        "fit_dpmm: prior (and vae.latent_dim) must match the feature width");
  }
  if (cfg.vae.input_dim == 0) {
    cfg.vae.input_dim = static_cast<int>(data.features.cols());
  }

  TrainResult out{init_state(cfg), {}};
  std::vector<std::int64_t> all(static_cast<std::size_t>(data.rows()));
  std::iota(all.begin(), all.end(), 0);
  for (int e = 0; e < cfg.max_epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    out.state.buffer.clear();
    out.state.buffer.append(data.features, all);
    ++out.state.epoch;
    update_dpmm(&out.state, cfg.dpmm_steps, cfg);

    MetricsRecord rec = epoch_metrics(out.state, data, e, false);
    rec.recon_loss = std::numeric_limits<double>::quiet_NaN();
    rec.kl_loss = std::numeric_limits<double>::quiet_NaN();
    if (cfg.record_timing) {
      rec.seconds = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    }
    out.history.push_back(rec);
  }
  return out;
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricsRecord>& history) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("write_metrics_csv: cannot open " + path);
  }
  out << "epoch,K,elbo,recon_loss,kl_loss,acc,seconds\n";
  for (const MetricsRecord& r : history) {
    out << r.epoch << ',' << r.K << ',' << fmt_double(r.elbo) << ','
        << fmt_double(r.recon_loss) << ',' << fmt_double(r.kl_loss) << ','
        << fmt_double(r.acc) << ',' << fmt_double(r.seconds) << '\n';
  }
  if (!out) {
    throw std::runtime_error("write_metrics_csv: write failed for " + path);
  }
}

void write_move_log(const std::string& path, const MoveLog& log) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("write_move_log: cannot open " + path);
  }
  for (const MoveRecord& rec : log) {
    out << rec.to_json() << '\n';
  }
  if (!out) {
    throw std::runtime_error("write_move_log: write failed for " + path);
  }
}

}  // namespace dpvae
