// dpvae/moves.cpp

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

#include "dpvae/moves.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace dpvae {

namespace {

// Drop one cluster row from every per-cluster array.
DpmmModel drop_cluster(const DpmmModel& model, int j) {
  const int K = model.K();
  const int D = model.dim();
  DpmmModel out;
  out.prior = model.prior;
  out.next_component_id = model.next_component_id;
  out.stick.alpha1.resize(K - 1);
  out.stick.alpha0.resize(K - 1);
  out.ng.mu_hat.resize(K - 1, D);
  out.ng.lambda_hat.resize(K - 1);
  out.ng.a_hat.resize(K - 1, D);
  out.ng.b_hat.resize(K - 1, D);
  out.component_ids.reserve(K - 1);
  int r = 0;
  for (int k = 0; k < K; ++k) {
    if (k == j) continue;
    out.stick.alpha1(r) = model.stick.alpha1(k);
    out.stick.alpha0(r) = model.stick.alpha0(k);
    out.ng.mu_hat.row(r) = model.ng.mu_hat.row(k);
    out.ng.lambda_hat(r) = model.ng.lambda_hat(k);
    out.ng.a_hat.row(r) = model.ng.a_hat.row(k);
    out.ng.b_hat.row(r) = model.ng.b_hat.row(k);
    out.component_ids.push_back(model.component_ids[k]);
    ++r;
  }
  return out;
}

SufficientStats fold_pair(const SufficientStats& stats, int i, int j) {
  const int K = static_cast<int>(stats.n_hat.size());
  const int D = static_cast<int>(stats.s1.cols());
  SufficientStats out = zero_stats(K - 1, D);
  out.entropy = stats.entropy;
  out.count = stats.count;
  int r = 0;
  for (int k = 0; k < K; ++k) {
    if (k == j) continue;
    out.n_hat(r) = stats.n_hat(k);
    out.s1.row(r) = stats.s1.row(k);
    out.s2.row(r) = stats.s2.row(k);
    if (k == i) {
      out.n_hat(r) += stats.n_hat(j);
      out.s1.row(r) += stats.s1.row(j);
      out.s2.row(r) += stats.s2.row(j);
    }
    ++r;
  }
  return out;
}

// Refresh only the stick weights from the given statistics, keeping every
// Normal-Gamma factor frozen.
void refresh_stick(DpmmModel* model, const SufficientStats& stats) {
  DpmmModel refreshed = global_step(*model, stats);
  model->stick = refreshed.stick;
}

// Assign `data` under the model with frozen observation factors, adapting
// only the stick weights, and return the final statistics and objective.
struct FrozenEval {
  DpmmModel model;
  SufficientStats stats;
  double elbo_value = 0.0;
};

FrozenEval eval_frozen(const DpmmModel& model, const Eigen::MatrixXd& data,
                       int sweeps) {
  FrozenEval out;
  out.model = model;
  for (int t = 0; t < sweeps; ++t) {
    Responsibilities r = local_step(data, out.model);
    out.stats = summarize(data, r);
    refresh_stick(&out.model, out.stats);
  }
  Responsibilities r = local_step(data, out.model);
  out.stats = summarize(data, r);
  out.elbo_value = elbo(out.model, out.stats);
  return out;
}

// Append the fresh model's clusters after the original ones. Appended stick
// entries start at the prior; they are refreshed by the caller's next
// global_step.
DpmmModel append_clusters(const DpmmModel& base, const DpmmModel& fresh,
                          bool mint_ids) {
  const int K = base.K();
  const int P = fresh.K();
  const int D = base.dim();
  DpmmModel out = base;
  out.stick.alpha1.conservativeResize(K + P);
  out.stick.alpha0.conservativeResize(K + P);
  out.ng.mu_hat.conservativeResize(K + P, D);
  out.ng.lambda_hat.conservativeResize(K + P);
  out.ng.a_hat.conservativeResize(K + P, D);
  out.ng.b_hat.conservativeResize(K + P, D);
  for (int p = 0; p < P; ++p) {
    // Carry the appended model's stick posterior along: a cluster fit on a
    // subsample keeps the weight it earned there, so the first evaluation
    // sweep sees it at its claimed mass instead of starving it against
    // incumbents whose sticks hold full-data mass.
    out.stick.alpha1(K + p) = fresh.stick.alpha1(p);
    out.stick.alpha0(K + p) = fresh.stick.alpha0(p);
    out.ng.mu_hat.row(K + p) = fresh.ng.mu_hat.row(p);
    out.ng.lambda_hat(K + p) = fresh.ng.lambda_hat(p);
    out.ng.a_hat.row(K + p) = fresh.ng.a_hat.row(p);
    out.ng.b_hat.row(K + p) = fresh.ng.b_hat.row(p);
    out.component_ids.push_back(mint_ids ? out.next_component_id++
                                         : -(p + 1));
  }
  return out;
}

DpmmModel prior_skeleton(const DpmmPrior& prior, int K) {
  const int D = prior.dim();
  DpmmModel m;
  m.prior = prior;
  m.stick.alpha1 = Eigen::VectorXd::Constant(K, 1.0);
  m.stick.alpha0 = Eigen::VectorXd::Constant(K, prior.alpha);
  m.ng.mu_hat = prior.mu0.transpose().replicate(K, 1);
  m.ng.lambda_hat = Eigen::VectorXd::Constant(K, prior.lambda_scale);
  m.ng.a_hat = Eigen::MatrixXd::Constant(K, D, prior.gamma_shape());
  m.ng.b_hat = Eigen::MatrixXd::Constant(K, D, prior.gamma_rate());
  m.component_ids.resize(K);
  for (int k = 0; k < K; ++k) m.component_ids[k] = -(k + 1);  // temporary
  m.next_component_id = 0;
  return m;
}

}  // namespace

void MoveConfig::validate() const {
  if (min_atoms_new_comp <= 0 || min_atoms_target_comp <= 0 ||
      min_atoms_retain_comp <= 0) {
    throw std::invalid_argument("MoveConfig: atom minima must be positive");
  }
  if (fresh_k <= 0) {
    throw std::invalid_argument("MoveConfig: fresh_k must be positive");
  }
  if (!(poor_fit_threshold > 0.0) || !(poor_fit_threshold < 1.0)) {
    throw std::invalid_argument(
        "MoveConfig: poor_fit_threshold must lie in (0, 1)");
  }
  if (max_subsample < min_atoms_new_comp) {
    throw std::invalid_argument(
        "MoveConfig: max_subsample must cover min_atoms_new_comp");
  }
  if (fresh_fit_sweeps <= 0 || candidate_eval_sweeps <= 0 ||
      max_merge_candidates <= 0) {
    throw std::invalid_argument("MoveConfig: sweep counts must be positive");
  }
}

const char* move_kind_name(MoveKind kind) {
  switch (kind) {
    case MoveKind::kBirth:
      return "birth";
    case MoveKind::kMerge:
      return "merge";
    case MoveKind::kShuffle:
      return "shuffle";
  }
  return "unknown";
}

std::string MoveRecord::to_json() const {
  nlohmann::json j;
  j["kind"] = move_kind_name(kind);
  j["elbo_before"] = elbo_before;
  j["elbo_after"] = elbo_after;
  j["accepted"] = accepted;
  j["clusters_involved"] = clusters_involved;
  j["epoch"] = epoch;
  j["step"] = step;
  return j.dump();
}

Eigen::MatrixXd collect_poor_fits(const Eigen::MatrixXd& batch,
                                  const Responsibilities& resp,
                                  const MoveConfig& cfg) {
  if (batch.rows() != resp.rows()) {
    throw std::invalid_argument("collect_poor_fits: row count mismatch");
  }
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    if (resp.row(i).maxCoeff() < cfg.poor_fit_threshold) {
      rows.push_back(i);
      if (static_cast<int>(rows.size()) >= cfg.max_subsample) break;
    }
  }
  if (static_cast<int>(rows.size()) < cfg.min_atoms_new_comp) {
    return Eigen::MatrixXd(0, batch.cols());
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), batch.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(r) = batch.row(rows[r]);
  return out;
}

BirthResult birth_move(const DpmmModel& model, const Eigen::MatrixXd& subsample,
                       const SufficientStats& full_stats,
                       const MoveConfig& cfg) {
  cfg.validate();
  BirthResult out{model, {}};
  out.record.kind = MoveKind::kBirth;
  if (subsample.rows() < cfg.min_atoms_new_comp) {
    return out;  // rejected no-op
  }
  if (subsample.cols() != model.dim()) {
    throw std::invalid_argument("birth_move: dimension mismatch");
  }

  // Baseline: the current clusters explain the subsample as they are.
  const FrozenEval base = eval_frozen(model, subsample, cfg.candidate_eval_sweeps);

  // Fresh model on the subsample, seeded from deterministic farthest-point
  // centers with nearest-center hard assignments, then coordinate ascent
  // and a merge pass to collapse overlapping proposals. Farthest-point
  // seeding finds separated lumps whatever order the rows arrive in;
  // contiguous chunks would all look like the global mean on a shuffled
  // buffer and the fit would collapse onto one component.
  const int B = static_cast<int>(subsample.rows());
  const int Kf = std::min(cfg.fresh_k, B);
  DpmmModel fresh = prior_skeleton(model.prior, Kf);
  {
    std::vector<Eigen::Index> seeds;
    seeds.reserve(static_cast<std::size_t>(Kf));
    const Eigen::RowVectorXd mean = subsample.colwise().mean();
    Eigen::Index first = 0;
    (subsample.rowwise() - mean).rowwise().squaredNorm().maxCoeff(&first);
    seeds.push_back(first);
    Eigen::VectorXd min_d = (subsample.rowwise() - subsample.row(first))
                                .rowwise()
                                .squaredNorm();
    while (static_cast<int>(seeds.size()) < Kf) {
      Eigen::Index next = 0;
      min_d.maxCoeff(&next);
      seeds.push_back(next);
      min_d = min_d.cwiseMin((subsample.rowwise() - subsample.row(next))
                                 .rowwise()
                                 .squaredNorm());
    }
    Responsibilities r0 = Eigen::MatrixXd::Zero(B, Kf);
    for (Eigen::Index i = 0; i < B; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < Kf; ++c) {
        const double d = (subsample.row(i) - subsample.row(seeds[c]))
                             .squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      r0(i, best) = 1.0;
    }
    SufficientStats s0 = summarize(subsample, r0);
    fresh = global_step(fresh, s0);
    SufficientStats s = s0;
    for (int t = 0; t < cfg.fresh_fit_sweeps; ++t) {
      Responsibilities r = local_step(subsample, fresh);
      s = summarize(subsample, r);
      fresh = global_step(fresh, s);
    }
    MergeResult collapsed = merge_move(fresh, s, cfg);
    fresh = collapsed.model;
  }

  // Expanded candidate: original clusters frozen, proposals appended.
  DpmmModel expanded = append_clusters(model, fresh, /*mint_ids=*/false);
  FrozenEval cand = eval_frozen(expanded, subsample, cfg.candidate_eval_sweeps);

  // Retain filter: drop proposals that hold too little subsample mass.
  const int K = model.K();
  while (cand.model.K() > K) {
    int weakest = -1;
    double weakest_mass = static_cast<double>(cfg.min_atoms_retain_comp);
    for (int p = K; p < cand.model.K(); ++p) {
      if (cand.stats.n_hat(p) < weakest_mass) {
        weakest_mass = cand.stats.n_hat(p);
        weakest = p;
      }
    }
    if (weakest < 0) break;
    DpmmModel reduced = drop_cluster(cand.model, weakest);
    cand = eval_frozen(reduced, subsample, 1);
  }
  const int proposals = cand.model.K() - K;

  out.record.elbo_before = base.elbo_value;
  out.record.elbo_after = proposals > 0 ? cand.elbo_value : base.elbo_value;
  if (proposals <= 0 || !(cand.elbo_value > base.elbo_value)) {
    return out;  // rejected
  }

  // Accepted: append the surviving proposals to the true model with fresh
  // identifiers. Proposal parameters come from the evaluated candidate
  // (Normal-Gamma factors there are exactly the fresh-fit values).
  out.record.accepted = true;
  DpmmModel kept = prior_skeleton(model.prior, proposals);
  for (int p = 0; p < proposals; ++p) {
    kept.ng.mu_hat.row(p) = cand.model.ng.mu_hat.row(K + p);
    kept.ng.lambda_hat(p) = cand.model.ng.lambda_hat(K + p);
    kept.ng.a_hat.row(p) = cand.model.ng.a_hat.row(K + p);
    kept.ng.b_hat.row(p) = cand.model.ng.b_hat.row(K + p);
  }
  out.model = append_clusters(model, kept, /*mint_ids=*/true);
  for (int p = 0; p < proposals; ++p) {
    out.record.clusters_involved.push_back(
        out.model.component_ids[K + p]);
  }

  // Append the mass the proposals claimed on the subsample to the full-data
  // statistics and take one global step, so the stick weights of the new
  // clusters reflect that mass immediately. Without this the newborns enter
  // the next sweep with near-zero prior weight and starve before any
  // responsibility can flow to them. Existing rows are kept as they are
  // (the subsample mass is briefly counted twice); the next full sweep
  // recomputes every statistic exactly.
  const int D = static_cast<int>(model.dim());
  SufficientStats folded = zero_stats(K + proposals, D);
  folded.n_hat.head(K) = full_stats.n_hat;
  folded.s1.topRows(K) = full_stats.s1;
  folded.s2.topRows(K) = full_stats.s2;
  folded.n_hat.tail(proposals) = cand.stats.n_hat.tail(proposals);
  folded.s1.bottomRows(proposals) = cand.stats.s1.bottomRows(proposals);
  folded.s2.bottomRows(proposals) = cand.stats.s2.bottomRows(proposals);
  folded.entropy = full_stats.entropy;  // stale scalar, refreshed next pass
  folded.count = full_stats.count;
  out.model = global_step(out.model, folded);
  return out;
}

MergeResult merge_move(const DpmmModel& model, const SufficientStats& stats,
                       const MoveConfig& cfg) {
  MergeResult out{model, stats, {}};
  bool changed = true;
  while (changed && out.model.K() >= 2) {
    changed = false;
    const int K = out.model.K();
    const double before = elbo(out.model, out.stats);

    struct Candidate {
      double score;
      int i, j;
    };
    std::vector<Candidate> cands;
    cands.reserve(static_cast<std::size_t>(K) * (K - 1) / 2);
    for (int i = 0; i < K; ++i) {
      for (int j = i + 1; j < K; ++j) {
        const double ni = out.stats.n_hat(i);
        const double nj = out.stats.n_hat(j);
        const double denom =
            out.model.ng.mu_hat.row(i).norm() * out.model.ng.mu_hat.row(j).norm();
        const double cos_sim =
            denom > 1e-12
                ? out.model.ng.mu_hat.row(i).dot(out.model.ng.mu_hat.row(j)) /
                      denom
                : 0.0;
        const double overlap = std::min(ni, nj) / (ni + nj + 1e-12);
        cands.push_back({cos_sim * overlap, i, j});
      }
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) {
                       return a.score > b.score;
                     });
    if (static_cast<int>(cands.size()) > cfg.max_merge_candidates) {
      cands.resize(cfg.max_merge_candidates);
    }

    for (const Candidate& c : cands) {
      SufficientStats folded = fold_pair(out.stats, c.i, c.j);
      DpmmModel merged = global_step(drop_cluster(out.model, c.j), folded);
      const double after = elbo(merged, folded);

      MoveRecord rec;
      rec.kind = MoveKind::kMerge;
      rec.elbo_before = before;
      rec.elbo_after = after;
      rec.accepted = after >= before;
      rec.clusters_involved = {out.model.component_ids[c.i],
                               out.model.component_ids[c.j]};
      out.records.push_back(rec);
      if (rec.accepted) {
        out.model = std::move(merged);
        out.stats = std::move(folded);
        changed = true;
        break;
      }
    }
  }
  return out;
}

ShuffleResult shuffle_move(const DpmmModel& model,
                           const SufficientStats& stats) {
  const int K = model.K();
  const int D = model.dim();
  std::vector<int> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return stats.n_hat(a) > stats.n_hat(b);
  });

  ShuffleResult out;
  out.permutation = order;
  out.model = model;
  out.stats = zero_stats(K, D);
  out.stats.entropy = stats.entropy;
  out.stats.count = stats.count;
  out.model.component_ids.resize(K);
  for (int k = 0; k < K; ++k) {
    const int src = order[k];
    out.model.stick.alpha1(k) = model.stick.alpha1(src);
    out.model.stick.alpha0(k) = model.stick.alpha0(src);
    out.model.ng.mu_hat.row(k) = model.ng.mu_hat.row(src);
    out.model.ng.lambda_hat(k) = model.ng.lambda_hat(src);
    out.model.ng.a_hat.row(k) = model.ng.a_hat.row(src);
    out.model.ng.b_hat.row(k) = model.ng.b_hat.row(src);
    out.model.component_ids[k] = model.component_ids[src];
    out.stats.n_hat(k) = stats.n_hat(src);
    out.stats.s1.row(k) = stats.s1.row(src);
    out.stats.s2.row(k) = stats.s2.row(src);
  }
  out.model = global_step(out.model, out.stats);
  return out;
}

}  // namespace dpvae
