// dpvae/dpmm.cpp

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

#include "dpvae/dpmm.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "dpvae/special_functions.hpp"
#include "json_util.hpp"

namespace dpvae {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
// Responsibilities below this are clamped inside the entropy term only.
constexpr double kEntropyClamp = 1e-12;

Eigen::MatrixXd elementwise_digamma(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      out(i, j) = digamma(m(i, j));
    }
  }
  return out;
}

// KL(Beta(a1, b1) || Beta(a0, b0)).
double kl_beta(double a1, double b1, double a0, double b0) {
  return log_gamma(a1 + b1) - log_gamma(a1) - log_gamma(b1) -
         log_gamma(a0 + b0) + log_gamma(a0) + log_gamma(b0) +
         (a1 - a0) * digamma(a1) + (b1 - b0) * digamma(b1) -
         (a1 + b1 - a0 - b0) * digamma(a1 + b1);
}

// KL(Gamma(a1, b1) || Gamma(a0, b0)), rate parameterization.
double kl_gamma(double a1, double b1, double a0, double b0) {
  return (a1 - a0) * digamma(a1) - log_gamma(a1) + log_gamma(a0) +
         a0 * (std::log(b1) - std::log(b0)) + a1 * (b0 - b1) / b1;
}

void check_model_stats(const DpmmModel& model, const SufficientStats& stats,
                       const char* where) {
  if (stats.n_hat.size() != model.K() || stats.s1.rows() != model.K() ||
      stats.s2.rows() != model.K() || stats.s1.cols() != model.dim() ||
      stats.s2.cols() != model.dim()) {
    throw std::invalid_argument(std::string(where) +
                                ": statistics shape does not match model");
  }
}

}  // namespace

void DpmmPrior::validate() const {
  if (!(alpha > 0.0)) {
    throw std::invalid_argument("DpmmPrior: alpha must be positive");
  }
  if (mu0.size() == 0) {
    throw std::invalid_argument("DpmmPrior: mu0 must be non-empty");
  }
  if (!(lambda_scale > 0.0)) {
    throw std::invalid_argument("DpmmPrior: lambda_scale must be positive");
  }
  if (!(sF > 0.0)) {
    throw std::invalid_argument("DpmmPrior: sF must be positive");
  }
  if (!(nu > 0.0)) {
    throw std::invalid_argument("DpmmPrior: nu must be positive");
  }
}

SufficientStats& SufficientStats::operator+=(const SufficientStats& other) {
  if (n_hat.size() != other.n_hat.size() || s1.cols() != other.s1.cols()) {
    throw std::invalid_argument(
        "SufficientStats: cannot aggregate mismatched shapes");
  }
  n_hat += other.n_hat;
  s1 += other.s1;
  s2 += other.s2;
  entropy += other.entropy;
  count += other.count;
  return *this;
}

SufficientStats zero_stats(int K, int D) {
  SufficientStats stats;
  stats.n_hat = Eigen::VectorXd::Zero(K);
  stats.s1 = Eigen::MatrixXd::Zero(K, D);
  stats.s2 = Eigen::MatrixXd::Zero(K, D);
  stats.entropy = 0.0;
  stats.count = 0;
  return stats;
}

DpmmModel init_model(const DpmmPrior& prior) {
  prior.validate();
  const int D = prior.dim();
  DpmmModel model;
  model.prior = prior;
  model.stick.alpha1 = Eigen::VectorXd::Constant(1, 1.0);
  model.stick.alpha0 = Eigen::VectorXd::Constant(1, prior.alpha);
  model.ng.mu_hat = prior.mu0.transpose();
  model.ng.lambda_hat = Eigen::VectorXd::Constant(1, prior.lambda_scale);
  model.ng.a_hat = Eigen::MatrixXd::Constant(1, D, prior.gamma_shape());
  model.ng.b_hat = Eigen::MatrixXd::Constant(1, D, prior.gamma_rate());
  model.component_ids = {0};
  model.next_component_id = 1;
  return model;
}

Eigen::VectorXd expected_log_pi(const StickPosterior& stick) {
  const Eigen::Index K = stick.alpha1.size();
  if (K == 0 || stick.alpha0.size() != K) {
    throw std::invalid_argument("expected_log_pi: malformed stick posterior");
  }
  Eigen::VectorXd out(K);
  double tail = 0.0;  // sum over j < k of E[log(1 - beta_j)]
  for (Eigen::Index k = 0; k < K; ++k) {
    const double a1 = stick.alpha1(k);
    const double a0 = stick.alpha0(k);
    const double psi_sum = digamma(a1 + a0);
    out(k) = digamma(a1) - psi_sum + tail;
    tail += digamma(a0) - psi_sum;
  }
  return out;
}

double expected_log_lik(const Eigen::VectorXd& x, const DpmmModel& model,
                        int k) {
  if (k < 0 || k >= model.K()) {
    throw std::invalid_argument("expected_log_lik: cluster index out of range");
  }
  if (x.size() != model.dim()) {
    throw std::invalid_argument("expected_log_lik: dimension mismatch");
  }
  const int D = model.dim();
  double acc = 0.0;
  for (int d = 0; d < D; ++d) {
    const double a = model.ng.a_hat(k, d);
    const double b = model.ng.b_hat(k, d);
    const double diff = x(d) - model.ng.mu_hat(k, d);
    acc += digamma(a) - std::log(b) - kLog2Pi - (a / b) * diff * diff -
           1.0 / model.ng.lambda_hat(k);
  }
  return 0.5 * acc;
}

Responsibilities local_step(const Eigen::MatrixXd& batch,
                            const DpmmModel& model) {
  if (batch.cols() != model.dim()) {
    throw std::invalid_argument("local_step: dimension mismatch");
  }
  const Eigen::Index B = batch.rows();
  const int K = model.K();
  const int D = model.dim();

  const Eigen::VectorXd elog_pi = expected_log_pi(model.stick);
  const Eigen::MatrixXd etau = model.ng.a_hat.array() / model.ng.b_hat.array();
  const Eigen::MatrixXd elog_tau =
      elementwise_digamma(model.ng.a_hat).array() -
      model.ng.b_hat.array().log();

  // log lik(n, k) = c_k - .5 x_n^2 . etau_k + x_n . (etau_k o mu_k); the
  // quadratic is expanded so the batch term is two matrix products.
  Eigen::VectorXd c(K);
  for (int k = 0; k < K; ++k) {
    c(k) = 0.5 * (elog_tau.row(k).sum() - D * kLog2Pi -
                  D / model.ng.lambda_hat(k) -
                  (etau.row(k).array() *
                   model.ng.mu_hat.row(k).array().square())
                      .sum()) +
           elog_pi(k);
  }
  Eigen::MatrixXd w =
      batch.array().square().matrix() * (-0.5 * etau).transpose() +
      batch * (etau.array() * model.ng.mu_hat.array()).matrix().transpose();
  w.rowwise() += c.transpose();

  // Row-wise normalization in the log domain: subtract the row's
  // log_sum_exp (computed max-shifted) before exponentiating.
  Responsibilities resp(B, K);
  Eigen::VectorXd row(K);
  for (Eigen::Index n = 0; n < B; ++n) {
    row = w.row(n).transpose();
    const double lse = log_sum_exp(std::span<const double>(row.data(), row.size()));
    resp.row(n) = (row.array() - lse).exp().matrix().transpose();
  }
  return resp;
}

SufficientStats summarize(const Eigen::MatrixXd& batch,
                          const Responsibilities& resp) {
  if (batch.rows() != resp.rows()) {
    throw std::invalid_argument("summarize: row count mismatch");
  }
  const int K = static_cast<int>(resp.cols());
  const int D = static_cast<int>(batch.cols());
  SufficientStats stats = zero_stats(K, D);
  stats.n_hat = resp.colwise().sum().transpose();
  stats.s1 = resp.transpose() * batch;
  stats.s2 = resp.transpose() * batch.array().square().matrix();
  stats.entropy =
      -(resp.array() * resp.array().max(kEntropyClamp).log()).sum();
  stats.count = batch.rows();
  return stats;
}

DpmmModel global_step(const DpmmModel& model, const SufficientStats& stats) {
  check_model_stats(model, stats, "global_step");
  const int K = model.K();
  const int D = model.dim();
  const DpmmPrior& prior = model.prior;

  DpmmModel out = model;
  out.stick.alpha1.resize(K);
  out.stick.alpha0.resize(K);
  out.ng.mu_hat.resize(K, D);
  out.ng.lambda_hat.resize(K);
  out.ng.a_hat.resize(K, D);
  out.ng.b_hat.resize(K, D);

  // Stick: alpha1_k = 1 + n_k, alpha0_k = alpha + mass of all later sticks.
  double remaining = 0.0;
  for (int k = K - 1; k >= 0; --k) {
    out.stick.alpha1(k) = 1.0 + stats.n_hat(k);
    out.stick.alpha0(k) = prior.alpha + remaining;
    remaining += stats.n_hat(k);
  }

  const double l0 = prior.lambda_scale;
  const double a0 = prior.gamma_shape();
  const double b0 = prior.gamma_rate();
  for (int k = 0; k < K; ++k) {
    const double n = stats.n_hat(k);
    if (!(n > 0.0)) {
      // Empty cluster: the posterior is exactly the prior.
      out.ng.mu_hat.row(k) = prior.mu0.transpose();
      out.ng.lambda_hat(k) = l0;
      out.ng.a_hat.row(k).setConstant(a0);
      out.ng.b_hat.row(k).setConstant(b0);
      continue;
    }
    const double lam = l0 + n;
    out.ng.lambda_hat(k) = lam;
    out.ng.a_hat.row(k).setConstant(a0 + 0.5 * n);
    const Eigen::ArrayXd xbar = stats.s1.row(k).transpose().array() / n;
    out.ng.mu_hat.row(k) =
        ((l0 * prior.mu0.array() + stats.s1.row(k).transpose().array()) / lam)
            .matrix()
            .transpose();
    // Within-cluster scatter from raw moments, clamped at zero against
    // cancellation, plus the prior-mean separation term.
    const Eigen::ArrayXd scatter =
        (stats.s2.row(k).transpose().array() -
         stats.s1.row(k).transpose().array() * xbar)
            .max(0.0);
    const Eigen::ArrayXd sep = (xbar - prior.mu0.array()).square();
    out.ng.b_hat.row(k) =
        (b0 + 0.5 * scatter + (0.5 * l0 * n / lam) * sep)
            .matrix()
            .transpose();
  }
  return out;
}

double elbo(const DpmmModel& model, const SufficientStats& stats) {
  check_model_stats(model, stats, "elbo");
  const int K = model.K();
  const int D = model.dim();
  const DpmmPrior& prior = model.prior;
  const double l0 = prior.lambda_scale;
  const double a0 = prior.gamma_shape();
  const double b0 = prior.gamma_rate();

  const Eigen::VectorXd elog_pi = expected_log_pi(model.stick);
  double total = stats.entropy;
  for (int k = 0; k < K; ++k) {
    const double n = stats.n_hat(k);
    const double lam = model.ng.lambda_hat(k);

    double data = 0.0;
    double kl_ng = 0.0;
    for (int d = 0; d < D; ++d) {
      const double a = model.ng.a_hat(k, d);
      const double b = model.ng.b_hat(k, d);
      const double mu = model.ng.mu_hat(k, d);
      const double etau = a / b;
      const double elog_tau = digamma(a) - std::log(b);
      data += n * (elog_tau - kLog2Pi - 1.0 / lam) -
              etau * (stats.s2(k, d) - 2.0 * mu * stats.s1(k, d) +
                      n * mu * mu);
      const double dmu = mu - prior.mu0(d);
      kl_ng += 0.5 * (std::log(lam / l0) - 1.0 + l0 / lam +
                      l0 * dmu * dmu * etau) +
               kl_gamma(a, b, a0, b0);
    }
    const double kl_stick =
        kl_beta(model.stick.alpha1(k), model.stick.alpha0(k), 1.0, prior.alpha);
    total += 0.5 * data + n * elog_pi(k) - kl_stick - kl_ng;
  }
  return total;
}

Eigen::VectorXd soft_assign(const Eigen::VectorXd& z, const DpmmModel& model) {
  const Responsibilities r = local_step(z.transpose(), model);
  return r.row(0).transpose();
}

ClusterMoments cluster_moments(const DpmmModel& model, int k) {
  if (k < 0 || k >= model.K()) {
    throw std::invalid_argument("cluster_moments: cluster index out of range");
  }
  const int D = model.dim();
  ClusterMoments m;
  m.mean = model.ng.mu_hat.row(k).transpose();
  m.var.resize(D);
  for (int d = 0; d < D; ++d) {
    const double a = model.ng.a_hat(k, d);
    if (!(a > 1.0)) {
      throw std::domain_error(
          "cluster_moments: expected variance undefined for a_hat <= 1");
    }
    m.var(d) = model.ng.b_hat(k, d) / (a - 1.0);
  }
  return m;
}

using detail::matrix_from_json;
using detail::matrix_to_json;
using detail::vector_from_json;
using detail::vector_to_json;

std::string model_to_json(const DpmmModel& model) {
  nlohmann::json j;
  j["format"] = "dpvae.dpmm.v1";
  j["K"] = model.K();
  j["D"] = model.dim();
  j["prior"] = {{"alpha", model.prior.alpha},
                {"mu0", vector_to_json(model.prior.mu0)},
                {"lambda_scale", model.prior.lambda_scale},
                {"sF", model.prior.sF},
                {"nu", model.prior.nu}};
  j["component_ids"] = model.component_ids;
  j["next_component_id"] = model.next_component_id;
  j["stick"] = {{"alpha1", vector_to_json(model.stick.alpha1)},
                {"alpha0", vector_to_json(model.stick.alpha0)}};
  j["ng"] = {{"mu_hat", matrix_to_json(model.ng.mu_hat)},
             {"lambda_hat", vector_to_json(model.ng.lambda_hat)},
             {"a_hat", matrix_to_json(model.ng.a_hat)},
             {"b_hat", matrix_to_json(model.ng.b_hat)}};
  return j.dump(2);
}

DpmmModel model_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("format", "") != "dpvae.dpmm.v1") {
    throw std::invalid_argument("model checkpoint: unknown format tag");
  }
  DpmmModel model;
  const auto& p = j.at("prior");
  model.prior.alpha = p.at("alpha").get<double>();
  model.prior.mu0 = vector_from_json(p.at("mu0"));
  model.prior.lambda_scale = p.at("lambda_scale").get<double>();
  model.prior.sF = p.at("sF").get<double>();
  model.prior.nu = p.at("nu").get<double>();
  model.prior.validate();

  const int K = j.at("K").get<int>();
  const int D = j.at("D").get<int>();
  if (D != model.prior.dim()) {
    throw std::invalid_argument("model checkpoint: dimension mismatch");
  }
  model.component_ids =
      j.at("component_ids").get<std::vector<std::int64_t>>();
  model.next_component_id = j.at("next_component_id").get<std::int64_t>();
  model.stick.alpha1 = vector_from_json(j.at("stick").at("alpha1"));
  model.stick.alpha0 = vector_from_json(j.at("stick").at("alpha0"));
  model.ng.mu_hat = matrix_from_json(j.at("ng").at("mu_hat"), D);
  model.ng.lambda_hat = vector_from_json(j.at("ng").at("lambda_hat"));
  model.ng.a_hat = matrix_from_json(j.at("ng").at("a_hat"), D);
  model.ng.b_hat = matrix_from_json(j.at("ng").at("b_hat"), D);

  if (model.stick.alpha1.size() != K || model.stick.alpha0.size() != K ||
      model.ng.mu_hat.rows() != K || model.ng.lambda_hat.size() != K ||
      model.ng.a_hat.rows() != K || model.ng.b_hat.rows() != K ||
      static_cast<int>(model.component_ids.size()) != K) {
    throw std::invalid_argument("model checkpoint: inconsistent K");
  }
  return model;
}

void save_model(const std::filesystem::path& path, const DpmmModel& model) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("save_model: cannot open " + path.string());
  }
  out << model_to_json(model) << "\n";
}

DpmmModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("load_model: cannot open " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace dpvae
