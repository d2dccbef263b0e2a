// Copyright 2026 The PLSP Authors. All Rights Reserved.
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

#include "plsp/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "plsp/kernels.hpp"

namespace plsp {

namespace {

std::vector<double> noisy(std::span<const double> x, double sigma, Rng& rng) {
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) v += sigma * standard_normal(rng);
  return out;
}

LabelMask random_candidates(std::size_t l, Rng& rng) {
  LabelMask m(l);
  do {
    m = LabelMask(l);
    for (Label j = 0; j < l; ++j) {
      if (rng() >> 63) m.set(j);
    }
  } while (m.empty() || m.is_full());
  return m;
}

}  // namespace

McInstance random_mc_instance(std::size_t num_labels, std::size_t input_dim, std::size_t feature_dim, double lambda,
                              double beta, Rng& rng) {
  const std::vector<std::size_t> hidden = {feature_dim};
  const Classifier model = Classifier::init(input_dim, hidden, num_labels, rng);

  constexpr std::size_t kCovInputs = 64;
  Tensor inputs(kCovInputs, input_dim);
  for (double& v : inputs.data()) v = standard_normal(rng);
  ClassCovStats stats(1, feature_dim);
  const std::vector<Label> zeros(kCovInputs, 0);
  stats.update(model.features(inputs), zeros);

  std::vector<double> x(input_dim);
  for (double& v : x) v = standard_normal(rng);

  McInstance in;
  in.weak_features = extract_features(model, noisy(x, 0.05, rng));
  in.strong_features = extract_features(model, noisy(x, 0.15, rng));
  in.frozen_head = model.params().head;
  in.head = model.params().head;
  in.candidates = random_candidates(num_labels, rng);
  in.sigma = stats.covariance(0);
  in.lambda = lambda;
  in.beta = beta;
  in.tau.assign(num_labels, 0.75);
  return in;
}

std::vector<BoundCase> check_bound_direction(std::size_t instances, std::size_t samples,
                                             const std::vector<double>& lambdas, std::uint64_t seed,
                                             std::size_t num_labels, std::size_t feature_dim) {
  std::vector<BoundCase> out;
  out.reserve(instances);
  for (std::size_t i = 0; i < instances; ++i) {
    Rng rng = make_substream(seed, {0x626f756e64, i});
    const double lambda = lambdas[i % lambdas.size()];
    const McInstance in = random_mc_instance(num_labels, feature_dim, feature_dim, lambda, kDefaultProbitSlope, rng);
    const McRegEstimate est = mc_oracle_reg(in, samples, rng);
    BoundCase c;
    c.lambda = lambda;
    c.closed_form_ce = est.closed_form_ce;
    c.mc_ce = est.strong_ce;
    c.mc_se = est.strong_ce_se;
    c.pass = c.closed_form_ce >= c.mc_ce - 3.0 * c.mc_se;
    out.push_back(c);
  }
  return out;
}

std::vector<double> mc_expected_softmax(const Tensor& head, std::span<const double> features, const Tensor& sigma,
                                        double lambda, std::size_t samples, Rng& rng) {
  const SemanticSampler sampler(sigma, lambda);
  const std::size_t l = head.rows();
  std::vector<double> mean(l, 0.0), z(l);
  for (std::size_t s = 0; s < samples; ++s) {
    const auto a = sampler.sample(features, rng);
    kernels::serial::gemm_nt(head.data(), a, z, l, head.cols(), 1);
    const auto p = softmax(z);
    for (std::size_t j = 0; j < l; ++j) mean[j] += p[j];
  }
  for (double& v : mean) v /= static_cast<double>(samples);
  return mean;
}

std::vector<WeakCase> check_weak_branch(const std::vector<std::size_t>& feature_dims,
                                        const std::vector<double>& lambdas, std::size_t samples, double beta,
                                        std::uint64_t seed, std::size_t num_labels) {
  std::vector<WeakCase> out;
  for (std::size_t d : feature_dims) {
    for (double lambda : lambdas) {
      Rng rng = make_substream(seed, {0x7765616b, d, out.size()});
      const McInstance in = random_mc_instance(num_labels, d, d, lambda, beta, rng);
      WeakCase c;
      c.feature_dim = d;
      c.lambda = lambda;
      c.closed_form = probit_weak_probs(in.frozen_head, in.weak_features, in.sigma, lambda, beta);
      c.monte_carlo = mc_expected_softmax(in.frozen_head, in.weak_features, in.sigma, lambda, samples, rng);
      for (std::size_t j = 0; j < num_labels; ++j) {
        c.max_rel_error = std::max(c.max_rel_error, std::abs(c.closed_form[j] - c.monte_carlo[j]) / c.monte_carlo[j]);
      }
      out.push_back(std::move(c));
    }
  }
  return out;
}

Lambda0Report check_lambda0(std::size_t draws, const std::vector<std::size_t>& label_counts, double beta,
                            std::uint64_t seed) {
  Lambda0Report rep;
  rep.label_counts = label_counts;
  Rng rng = make_substream(seed, {0x6c616d30});
  for (std::size_t l : label_counts) {
    double worst = 0.0;
    const Tensor quad(l, l);
    std::vector<double> z(l);
    for (std::size_t s = 0; s < draws; ++s) {
      for (double& v : z) v = -6.0 + 12.0 * uniform01(rng);
      const auto soft = softmax(z);
      const double lse = logsumexp(z);
      const auto shifted = shifted_log_probs_from_logits(z, quad, 0.0);
      const auto probit = probit_weak_probs_from_logits(z, quad, 0.0, beta);
      for (std::size_t j = 0; j < l; ++j) {
        rep.shifted_vs_log_softmax = std::max(rep.shifted_vs_log_softmax, std::abs(shifted[j] - (z[j] - lse)));
        worst = std::max(worst, std::abs(probit[j] - soft[j]));
      }
    }
    rep.probit_vs_softmax.push_back(worst);
  }
  Tensor sigma = Tensor::identity(4);
  const std::vector<double> a = {0.3, -1.2, 2.5, 0.0};
  rep.sampler_identity = sample_semantic(a, sigma, 0.0, rng) == a && sample_semantic(a, Tensor(4, 4), 1.0, rng) == a;
  return rep;
}

std::vector<SlopeCandidate> probit_slope_report() {
  const double root_pi_over_8 = std::sqrt(std::numbers::pi / 8.0);
  return {
      {"default", kDefaultProbitSlope, probit_sup_error(kDefaultProbitSlope)},
      {"sqrt_pi_over_8", root_pi_over_8, probit_sup_error(root_pi_over_8)},
      {"pi_squared_over_8", kProbitSlopePiSquaredOver8, probit_sup_error(kProbitSlopePiSquaredOver8)},
  };
}

}  // namespace plsp
