// dpvae/config.cpp

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

#include "dpvae/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace dpvae {

namespace {

// Typos in an experiment file should fail loudly, not silently fall back
// to defaults.
void check_keys(const nlohmann::json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::invalid_argument("config: unknown key \"" + item.key() +
                                  "\" in " + where);
    }
  }
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T* out) {
  if (j.contains(key)) *out = j.at(key).get<T>();
}

void parse_dataset(const nlohmann::json& j, ExperimentConfig* cfg) {
  check_keys(j, "dataset",
             {"path", "format", "labels_path", "label_column"});
  maybe(j, "path", &cfg->dataset_path);
  maybe(j, "format", &cfg->dataset_format);
  maybe(j, "labels_path", &cfg->labels_path);
  maybe(j, "label_column", &cfg->label_column);
}

void parse_vae(const nlohmann::json& j, VaeConfig* vae) {
  check_keys(j, "vae",
             {"input_dim", "hidden_dims", "latent_dim", "output_activation",
              "kld_weight", "learning_rate", "weight_decay", "batch_size"});
  maybe(j, "input_dim", &vae->input_dim);
  maybe(j, "hidden_dims", &vae->hidden_dims);
  maybe(j, "latent_dim", &vae->latent_dim);
  maybe(j, "output_activation", &vae->output_activation);
  maybe(j, "kld_weight", &vae->kld_weight);
  maybe(j, "learning_rate", &vae->learning_rate);
  maybe(j, "weight_decay", &vae->weight_decay);
  maybe(j, "batch_size", &vae->batch_size);
}

void parse_prior(const nlohmann::json& j, DpmmPrior* prior) {
  check_keys(j, "prior", {"alpha", "mu0", "lambda_scale", "sF", "nu"});
  maybe(j, "alpha", &prior->alpha);
  maybe(j, "lambda_scale", &prior->lambda_scale);
  maybe(j, "sF", &prior->sF);
  maybe(j, "nu", &prior->nu);
  if (j.contains("mu0")) {
    const auto values = j.at("mu0").get<std::vector<double>>();
    prior->mu0.resize(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) {
      prior->mu0(static_cast<Eigen::Index>(i)) = values[i];
    }
  }
}

void parse_moves(const nlohmann::json& j, MoveConfig* moves) {
  check_keys(j, "moves",
             {"min_atoms_new_comp", "min_atoms_target_comp",
              "min_atoms_retain_comp", "fresh_k", "poor_fit_threshold",
              "shuffle_enabled", "max_subsample", "fresh_fit_sweeps",
              "candidate_eval_sweeps", "max_merge_candidates"});
  maybe(j, "min_atoms_new_comp", &moves->min_atoms_new_comp);
  maybe(j, "min_atoms_target_comp", &moves->min_atoms_target_comp);
  maybe(j, "min_atoms_retain_comp", &moves->min_atoms_retain_comp);
  maybe(j, "fresh_k", &moves->fresh_k);
  maybe(j, "poor_fit_threshold", &moves->poor_fit_threshold);
  maybe(j, "shuffle_enabled", &moves->shuffle_enabled);
  maybe(j, "max_subsample", &moves->max_subsample);
  maybe(j, "fresh_fit_sweeps", &moves->fresh_fit_sweeps);
  maybe(j, "candidate_eval_sweeps", &moves->candidate_eval_sweeps);
  maybe(j, "max_merge_candidates", &moves->max_merge_candidates);
}

IncrementalSchedule parse_schedule(const nlohmann::json& j) {
  IncrementalSchedule schedule;
  if (!j.is_array()) {
    throw std::invalid_argument("config: schedule must be an array");
  }
  for (const auto& item : j) {
    check_keys(item, "schedule entry", {"epoch", "classes"});
    ScheduleEntry entry;
    entry.epoch = item.at("epoch").get<int>();
    entry.active_classes =
        item.at("classes").get<std::vector<std::int64_t>>();
    schedule.entries.push_back(std::move(entry));
  }
  return schedule;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset_path.empty()) {
    throw std::invalid_argument("config: dataset.path is required");
  }
  if (dataset_format != "idx" && dataset_format != "csv") {
    throw std::invalid_argument(
        "config: dataset.format must be \"idx\" or \"csv\"");
  }
  if (dataset_format == "idx" && labels_path.empty()) {
    throw std::invalid_argument(
        "config: dataset.labels_path is required for idx data");
  }
  // input_dim is filled from the data at load time, so validate a copy
  // with a placeholder when it is still unset.
  VaeConfig vae_check = vae;
  if (vae_check.input_dim == 0) vae_check.input_dim = 1;
  vae_check.validate();
  if (!(vae.kld_weight > 0.0)) {
    throw std::invalid_argument(
        "config: vae.kld_weight must be positive for an experiment");
  }
  if (prior.mu0.size() > 0) {
    prior.validate();
    if (prior.dim() != vae.latent_dim) {
      throw std::invalid_argument(
          "config: prior.mu0 length must equal vae.latent_dim");
    }
  } else {
    DpmmPrior prior_check = prior;
    prior_check.mu0 = Eigen::VectorXd::Zero(vae.latent_dim);
    prior_check.validate();
  }
  moves.validate();
  if (dpmm_steps < 0) {
    throw std::invalid_argument("config: dpmm_steps must be >= 0");
  }
  if (max_epochs < 0) {
    throw std::invalid_argument("config: max_epochs must be >= 0");
  }
  if (checkpoint_interval < 0) {
    throw std::invalid_argument("config: checkpoint_interval must be >= 0");
  }
  if (output_dir.empty()) {
    throw std::invalid_argument("config: output_dir must not be empty");
  }
  if (schedule) schedule->validate();
}

ExperimentConfig config_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  check_keys(j, "config root",
             {"dataset", "vae", "prior", "moves", "dpmm_steps", "max_epochs",
              "seed", "schedule", "output_dir", "record_timing",
              "checkpoint_interval", "moves_enabled"});
  ExperimentConfig cfg;
  if (j.contains("dataset")) parse_dataset(j.at("dataset"), &cfg);
  if (j.contains("vae")) parse_vae(j.at("vae"), &cfg.vae);
  if (j.contains("prior")) parse_prior(j.at("prior"), &cfg.prior);
  if (j.contains("moves")) parse_moves(j.at("moves"), &cfg.moves);
  maybe(j, "dpmm_steps", &cfg.dpmm_steps);
  maybe(j, "max_epochs", &cfg.max_epochs);
  maybe(j, "seed", &cfg.seed);
  if (j.contains("schedule")) cfg.schedule = parse_schedule(j.at("schedule"));
  maybe(j, "output_dir", &cfg.output_dir);
  maybe(j, "record_timing", &cfg.record_timing);
  maybe(j, "checkpoint_interval", &cfg.checkpoint_interval);
  maybe(j, "moves_enabled", &cfg.moves_enabled);

  if (cfg.prior.mu0.size() == 0) {
    cfg.prior.mu0 = Eigen::VectorXd::Zero(cfg.vae.latent_dim);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("config: cannot open " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

}  // namespace dpvae
