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

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "plsp/objective.hpp"

namespace plsp {

/// One Ω_u-style instance built from a freshly initialised one-hidden-layer model:
/// Σ is the population covariance of its features on 64 standard-normal inputs, and the
/// weak and strong features come from the same input under small and larger input noise.
McInstance random_mc_instance(std::size_t num_labels, std::size_t input_dim, std::size_t feature_dim, double lambda,
                              double beta, Rng& rng);

struct BoundCase {
  double lambda = 0.0;
  double closed_form_ce = 0.0;
  double mc_ce = 0.0;
  double mc_se = 0.0;
  bool pass = false;  // closed form >= MC − 3 SE
};

/// Strong-branch bound direction over `instances` random cases cycling through `lambdas`.
std::vector<BoundCase> check_bound_direction(std::size_t instances, std::size_t samples,
                                             const std::vector<double>& lambdas, std::uint64_t seed,
                                             std::size_t num_labels = 3, std::size_t feature_dim = 8);

struct WeakCase {
  std::size_t feature_dim = 0;
  double lambda = 0.0;
  std::vector<double> closed_form;
  std::vector<double> monte_carlo;
  double max_rel_error = 0.0;
};

/// Monte-Carlo mean of softmax(Ŵã), ã ~ 𝒩(â, λΣ).
std::vector<double> mc_expected_softmax(const Tensor& head, std::span<const double> features, const Tensor& sigma,
                                        double lambda, std::size_t samples, Rng& rng);

/// Probit weak-branch map against its Monte-Carlo target for every (d_f, λ) pair.
std::vector<WeakCase> check_weak_branch(const std::vector<std::size_t>& feature_dims,
                                        const std::vector<double>& lambdas, std::size_t samples, double beta,
                                        std::uint64_t seed, std::size_t num_labels = 3);

struct Lambda0Report {
  double shifted_vs_log_softmax = 0.0;          // max |Δ| of log-probabilities
  std::vector<double> probit_vs_softmax;        // max |Δ| per label count in `label_counts`
  std::vector<std::size_t> label_counts;
  bool sampler_identity = false;
};

/// Random logits in [−6, 6]: λ = 0 reductions of both closed forms and of the sampler.
Lambda0Report check_lambda0(std::size_t draws, const std::vector<std::size_t>& label_counts, double beta,
                            std::uint64_t seed);

struct SlopeCandidate {
  std::string name;
  double beta = 0.0;
  double sup_error = 0.0;
};

/// sup |sigmoid − Φ(β·)| for the shipped default, √(π/8) and π²/8.
std::vector<SlopeCandidate> probit_slope_report();

}  // namespace plsp
