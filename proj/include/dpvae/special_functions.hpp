// dpvae/special_functions.hpp

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

#include <span>

namespace dpvae {

// psi(x) = d/dx log Gamma(x) for x > 0.
// Evaluated by pushing the argument above 8 with psi(x) = psi(x+1) - 1/x,
// then applying the asymptotic (Bernoulli) series. Absolute error is below
// 1e-12 over the range exercised by the model updates (x >= 1e-6).
// Throws std::domain_error for x <= 0 (poles and the negative axis).
double digamma(double x);

// log Gamma(x) for x > 0, same recurrence-plus-Stirling-series scheme.
// Throws std::domain_error for x <= 0.
double log_gamma(double x);

// log(sum_i exp(v_i)) without overflow: the maximum is factored out before
// exponentiation, so entries anywhere in the double range (|v_i| up to ~700
// and far beyond) are handled. Throws std::domain_error on empty input.
double log_sum_exp(std::span<const double> v);

}  // namespace dpvae
