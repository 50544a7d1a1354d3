// dpvae/moves.hpp

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
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dpvae/dpmm.hpp"

// Moves that change the number of active clusters between coordinate-ascent
// steps: births propose new clusters from poorly-explained rows, merges
// collapse redundant pairs, and shuffles keep clusters ordered by mass.
// Every accepted move is gated on the variational objective.

namespace dpvae {

struct MoveConfig {
  int min_atoms_new_comp = 80;     // smallest subsample that can seed a birth
  int min_atoms_target_comp = 100; // smallest cluster worth targeting
  int min_atoms_retain_comp = 100; // smallest surviving proposal
  int fresh_k = 5;                 // clusters in the fresh birth model
  double poor_fit_threshold = 0.5; // max responsibility below this = poor fit
  bool shuffle_enabled = true;
  int max_subsample = 2000;        // cap on the poor-fit buffer
  int fresh_fit_sweeps = 10;       // coordinate-ascent sweeps of the fresh fit
  int candidate_eval_sweeps = 2;   // allocation-refresh sweeps per candidate
  int max_merge_candidates = 64;   // pairs evaluated per merge pass

  void validate() const;
};

enum class MoveKind { kBirth, kMerge, kShuffle };
const char* move_kind_name(MoveKind kind);

struct MoveRecord {
  MoveKind kind = MoveKind::kBirth;
  double elbo_before = 0.0;
  double elbo_after = 0.0;
  bool accepted = false;
  std::vector<std::int64_t> clusters_involved;
  int epoch = -1;  // filled by the training loop
  int step = -1;

  std::string to_json() const;  // one JSON object per record
};

using MoveLog = std::vector<MoveRecord>;

// Rows of `batch` whose maximum responsibility falls below
// cfg.poor_fit_threshold, in row order, capped at cfg.max_subsample.
// Returns an empty matrix when fewer than cfg.min_atoms_new_comp qualify.
Eigen::MatrixXd collect_poor_fits(const Eigen::MatrixXd& batch,
                                  const Responsibilities& resp,
                                  const MoveConfig& cfg);

// Proposes new clusters fit on `subsample` and accepts them iff they raise
// the subsample objective.
//
// A fresh model with cfg.fresh_k clusters is fit on the subsample
// (cfg.fresh_fit_sweeps coordinate-ascent sweeps, then a merge pass so
// overlapping proposals collapse). The candidate comparison assigns the
// subsample under the original model and under the expanded K + K' model;
// both candidates keep all Normal-Gamma parameters frozen and only re-fit
// stick weights to the subsample, so existing clusters cannot migrate onto
// the subsample during evaluation. Proposals holding less than
// cfg.min_atoms_retain_comp expected subsample mass after re-assignment are
// dropped before the test. On acceptance the surviving proposals are
// appended to the original model with freshly minted component_ids; their
// stick entries are placeholders until the next global_step over full data.
//
// A subsample smaller than cfg.min_atoms_new_comp is a no-op that returns a
// rejected record.
struct BirthResult {
  DpmmModel model;
  MoveRecord record;
};
BirthResult birth_move(const DpmmModel& model, const Eigen::MatrixXd& subsample,
                       const SufficientStats& full_stats,
                       const MoveConfig& cfg);

// Repeatedly merges the best cluster pair while doing so does not lower the
// objective. Candidate pairs are ranked by cosine similarity of posterior
// means weighted by mass overlap; each candidate model is formed by summing
// the pair's statistics and re-running global_step. The merged cluster sits
// at the lower index and keeps that component's identifier; the other
// identifier is retired. Statistics are returned folded to match the final
// model. K = 1 is a no-op.
struct MergeResult {
  DpmmModel model;
  SufficientStats stats;
  MoveLog records;
};
MergeResult merge_move(const DpmmModel& model, const SufficientStats& stats,
                       const MoveConfig& cfg);

// Reorders clusters by descending n_hat (stable for ties), carrying
// component_ids and statistics rows along, then re-runs global_step on the
// permuted statistics. A pure permutation: the multiset of
// (component_id, n_hat) pairs is unchanged.
struct ShuffleResult {
  DpmmModel model;
  SufficientStats stats;
  std::vector<int> permutation;  // new position -> old position
};
ShuffleResult shuffle_move(const DpmmModel& model,
                           const SufficientStats& stats);

}  // namespace dpvae
