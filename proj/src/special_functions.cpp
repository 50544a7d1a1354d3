// dpvae/special_functions.cpp

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

#include "dpvae/special_functions.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dpvae {

double digamma(double x) {
  if (!(x > 0.0)) {
    throw std::domain_error("digamma: argument must be positive");
  }
  // Upward recurrence psi(x) = psi(x + 1) - 1/x until the asymptotic series
  // converges fast (y >= 8).
  double acc = 0.0;
  double y = x;
  while (y < 8.0) {
    acc += 1.0 / y;
    y += 1.0;
  }
  const double inv = 1.0 / y;
  const double t = inv * inv;
  // psi(y) ~ log y - 1/(2y) - sum_n B_{2n} / (2n y^{2n}), truncated after
  // n = 7; at y >= 8 the first dropped term is below 1e-16.
  const double tail =
      t * (1.0 / 12.0 -
           t * (1.0 / 120.0 -
                t * (1.0 / 252.0 -
                     t * (1.0 / 240.0 -
                          t * (1.0 / 132.0 -
                               t * (691.0 / 32760.0 - t * (1.0 / 12.0)))))));
  return std::log(y) - 0.5 * inv - tail - acc;
}

double log_gamma(double x) {
  if (!(x > 0.0)) {
    throw std::domain_error("log_gamma: argument must be positive");
  }
  // log Gamma(x) = log Gamma(x + 1) - log x, applied until Stirling's series
  // is accurate (y >= 10).
  double acc = 0.0;
  double y = x;
  while (y < 10.0) {
    acc += std::log(y);
    y += 1.0;
  }
  static const double kHalfLog2Pi = 0.91893853320467274178;
  const double inv = 1.0 / y;
  const double t = inv * inv;
  const double series =
      inv * (1.0 / 12.0 -
             t * (1.0 / 360.0 -
                  t * (1.0 / 1260.0 -
                       t * (1.0 / 1680.0 -
                            t * (1.0 / 1188.0 - t * (691.0 / 360360.0))))));
  return (y - 0.5) * std::log(y) - y + kHalfLog2Pi + series - acc;
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) {
    throw std::domain_error("log_sum_exp: empty input");
  }
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) {
    // All -inf stays -inf (an empty mixture cell); +inf or NaN propagates.
    return m;
  }
  double s = 0.0;
  for (const double x : v) {
    s += std::exp(x - m);
  }
  return m + std::log(s);
}

}  // namespace dpvae
