// dpvae/metrics.hpp

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
#include <vector>

#include <Eigen/Core>

namespace dpvae {

struct LabeledAssignment {
  std::vector<std::int64_t> assignments;  // cluster identifier per point
  std::vector<std::int64_t> labels;       // ground-truth class per point
};

// Fraction of points whose label matches the best many-to-one mapping from
// clusters to labels. Because the mapping is unconstrained per cluster, the
// optimum gives every cluster its majority label.
double clustering_accuracy(const LabeledAssignment& la);

// Euclidean k-nearest-neighbor misclassification fraction. Vote ties are
// broken by the smaller mean distance among the tied labels, then by the
// lower label identifier.
double knn_error(const Eigen::MatrixXd& train_latents,
                 const std::vector<std::int64_t>& train_labels,
                 const Eigen::MatrixXd& test_latents,
                 const std::vector<std::int64_t>& test_labels, int k);

// Plain EM for a diagonal-covariance Gaussian mixture, used as an
// independent cross-check on small instances. Means start at distinct data
// rows chosen with `rng`; mixing weights start uniform.
struct EmResult {
  Eigen::MatrixXd means;      // K x D
  Eigen::MatrixXd variances;  // K x D
  Eigen::MatrixXd resp;       // N x K, rows sum to one
  Eigen::VectorXd weights;    // K
  std::vector<double> log_likelihood;  // one entry per iteration
};

EmResult em_oracle(const Eigen::MatrixXd& data, int K, int iters,
                   std::mt19937_64& rng);

}  // namespace dpvae
