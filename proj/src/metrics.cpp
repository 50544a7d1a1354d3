// dpvae/metrics.cpp

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

#include "dpvae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>

#include "dpvae/special_functions.hpp"

namespace dpvae {

double clustering_accuracy(const LabeledAssignment& la) {
  const std::size_t n = la.assignments.size();
  if (n == 0) {
    throw std::invalid_argument("clustering_accuracy: empty input");
  }
  if (la.labels.size() != n) {
    throw std::invalid_argument("clustering_accuracy: length mismatch");
  }
  std::map<std::int64_t, std::map<std::int64_t, std::int64_t>> counts;
  for (std::size_t i = 0; i < n; ++i) {
    if (la.assignments[i] < 0 || la.labels[i] < 0) {
      throw std::invalid_argument(
          "clustering_accuracy: identifiers must be non-negative");
    }
    counts[la.assignments[i]][la.labels[i]] += 1;
  }
  std::int64_t hits = 0;
  for (const auto& [cluster, per_label] : counts) {
    std::int64_t best = 0;
    for (const auto& [label, c] : per_label) best = std::max(best, c);
    hits += best;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

double knn_error(const Eigen::MatrixXd& train_latents,
                 const std::vector<std::int64_t>& train_labels,
                 const Eigen::MatrixXd& test_latents,
                 const std::vector<std::int64_t>& test_labels, int k) {
  const Eigen::Index n_train = train_latents.rows();
  const Eigen::Index n_test = test_latents.rows();
  if (n_train == 0) {
    throw std::invalid_argument("knn_error: empty training set");
  }
  if (k < 1 || k > n_train) {
    throw std::invalid_argument("knn_error: k must be in [1, train size]");
  }
  if (static_cast<Eigen::Index>(train_labels.size()) != n_train ||
      static_cast<Eigen::Index>(test_labels.size()) != n_test) {
    throw std::invalid_argument("knn_error: label length mismatch");
  }
  if (n_test > 0 && test_latents.cols() != train_latents.cols()) {
    throw std::invalid_argument("knn_error: dimension mismatch");
  }
  if (n_test == 0) return 0.0;

  Eigen::Index wrong = 0;
  std::vector<std::pair<double, Eigen::Index>> dist(n_train);
  for (Eigen::Index i = 0; i < n_test; ++i) {
    for (Eigen::Index j = 0; j < n_train; ++j) {
      dist[j] = {(train_latents.row(j) - test_latents.row(i)).squaredNorm(),
                 j};
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());

    std::map<std::int64_t, std::pair<std::int64_t, double>> votes;  // count, sum dist
    for (int v = 0; v < k; ++v) {
      auto& entry = votes[train_labels[dist[v].second]];
      entry.first += 1;
      entry.second += std::sqrt(dist[v].first);
    }
    std::int64_t best_label = -1;
    std::int64_t best_count = -1;
    double best_mean = std::numeric_limits<double>::infinity();
    for (const auto& [label, entry] : votes) {
      const double mean = entry.second / static_cast<double>(entry.first);
      const bool better =
          entry.first > best_count ||
          (entry.first == best_count && mean < best_mean);
      // Map order guarantees the lowest label wins exact remaining ties.
      if (better) {
        best_label = label;
        best_count = entry.first;
        best_mean = mean;
      }
    }
    if (best_label != test_labels[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(n_test);
}

EmResult em_oracle(const Eigen::MatrixXd& data, int K, int iters,
                   std::mt19937_64& rng) {
  const Eigen::Index n = data.rows();
  const Eigen::Index d = data.cols();
  if (n == 0) {
    throw std::invalid_argument("em_oracle: empty data");
  }
  if (K < 1 || static_cast<Eigen::Index>(K) > n) {
    throw std::invalid_argument("em_oracle: K must be in [1, rows]");
  }
  if (iters < 0) {
    throw std::invalid_argument("em_oracle: iters must be non-negative");
  }

  constexpr double kVarFloor = 1e-8;
  constexpr double kWeightFloor = 1e-12;
  constexpr double kHalfLog2Pi = 0.91893853320467274178;

  // Starting rows chosen with distance-proportional seeding so components
  // spread across separated modes instead of doubling up in one. All draws
  // come straight from the generator, so the choice depends only on its
  // state.
  EmResult res;
  res.means.resize(K, d);
  res.means.row(0) = data.row(static_cast<Eigen::Index>(
      rng() % static_cast<std::uint64_t>(n)));
  Eigen::VectorXd dist2 =
      (data.rowwise() - res.means.row(0)).rowwise().squaredNorm();
  for (int m = 1; m < K; ++m) {
    const double total = dist2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double u =
          static_cast<double>(rng() >> 11) * 0x1.0p-53 * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += dist2(i);
        if (u < acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n));
    }
    res.means.row(m) = data.row(pick);
    dist2 = dist2.cwiseMin(
        (data.rowwise() - res.means.row(m)).rowwise().squaredNorm());
  }
  const Eigen::RowVectorXd grand_mean = data.colwise().mean();
  Eigen::RowVectorXd grand_var =
      (data.rowwise() - grand_mean).array().square().colwise().mean();
  grand_var = grand_var.cwiseMax(kVarFloor);
  res.variances = grand_var.replicate(K, 1);
  res.weights = Eigen::VectorXd::Constant(K, 1.0 / K);
  res.resp = Eigen::MatrixXd::Zero(n, K);

  // E-step in the log domain; refreshes responsibilities and records the
  // data log-likelihood under the current parameters.
  Eigen::MatrixXd log_r(n, K);
  const auto e_step = [&]() {
    for (int m = 0; m < K; ++m) {
      const double log_norm =
          std::log(std::max(res.weights(m), kWeightFloor)) -
          static_cast<double>(d) * kHalfLog2Pi -
          0.5 * res.variances.row(m).array().log().sum();
      log_r.col(m) =
          (((data.rowwise() - res.means.row(m)).array().square().rowwise() /
            res.variances.row(m).array())
               .rowwise()
               .sum() *
           -0.5) +
          log_norm;
    }
    double ll = 0.0;
    Eigen::VectorXd row(K);
    for (Eigen::Index i = 0; i < n; ++i) {
      row = log_r.row(i);
      const double lse =
          log_sum_exp(std::span<const double>(row.data(), row.size()));
      ll += lse;
      res.resp.row(i) = (log_r.row(i).array() - lse).exp();
    }
    res.log_likelihood.push_back(ll);
  };

  e_step();
  for (int it = 0; it < iters; ++it) {
    for (int m = 0; m < K; ++m) {
      const double nk = res.resp.col(m).sum();
      if (nk <= 0.0) continue;  // leave a starved component in place
      const Eigen::RowVectorXd mean =
          (res.resp.col(m).transpose() * data) / nk;
      Eigen::RowVectorXd var =
          (res.resp.col(m).transpose() *
           (data.rowwise() - mean).array().square().matrix()) /
          nk;
      res.means.row(m) = mean;
      res.variances.row(m) = var.cwiseMax(kVarFloor);
      res.weights(m) = nk / static_cast<double>(n);
    }
    e_step();
  }
  return res;
}

}  // namespace dpvae
