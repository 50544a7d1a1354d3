// dpvae/config.hpp

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
#include <optional>
#include <string>

#include "dpvae/dataset.hpp"
#include "dpvae/dpmm.hpp"
#include "dpvae/mlp_vae.hpp"
#include "dpvae/moves.hpp"

namespace dpvae {

// One experiment, fully described: where the data lives, every model
// hyperparameter, and the run schedule. A config JSON file is the single
// reproducibility artifact; command-line flags only override its fields.
struct ExperimentConfig {
  std::string dataset_path;
  std::string dataset_format = "idx";  // "idx" or "csv"
  std::string labels_path;             // idx only
  std::string label_column;            // csv only, empty = unlabeled

  VaeConfig vae;
  DpmmPrior prior;   // mu0 defaults to zeros(latent_dim)
  MoveConfig moves;

  int dpmm_steps = 5;  // clustering updates per epoch
  int max_epochs = 100;
  std::uint64_t seed = 0;
  std::optional<IncrementalSchedule> schedule;
  std::string output_dir = ".";
  // With timing off the metrics CSV is a pure function of config + seed;
  // the seconds column is written as 0.
  bool record_timing = false;
  int checkpoint_interval = 0;  // epochs between checkpoints, 0 = final only
  // When false, mixture updates run pure coordinate ascent: no birth,
  // merge, or shuffle proposals. The ablation mode for move studies.
  bool moves_enabled = true;

  // Full-experiment validation. Stricter than the component configs: a
  // training run requires kld_weight > 0 (the zero setting drops the
  // coupling and is only meaningful in isolation).
  void validate() const;
};

ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);

}  // namespace dpvae
