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
#include <numbers>
#include <span>
#include <vector>

#include "plsp/pldata.hpp"
#include "plsp/rng.hpp"
#include "plsp/tensor.hpp"

namespace plsp {

/// Slope minimising sup_{x∈[−8,8]} |sigmoid(x) − Φ(βx)| on a 1e-4 grid; see fit_probit_slope().
inline constexpr double kDefaultProbitSlope = 0.5876;
/// Alternative slope π²/8, selectable from the CLI.
inline constexpr double kProbitSlopePiSquaredOver8 = std::numbers::pi * std::numbers::pi / 8.0;

/// Strength and probit slope of the semantic feature transformation.
struct SemanticSpec {
  double lambda = 0.0;
  double beta = kDefaultProbitSlope;
  double eig_floor = 0.0;

  void validate() const;
};

/// Per-class running population mean and covariance of deep features.
///
/// update() merges a mini-batch's per-class (count, mean, covariance) into the running
/// statistics with the pairwise-merge rule
///   Σ ← (mΣ + m′Σ′)/(m+m′) + m m′ (μ−μ′)(μ−μ′)ᵀ/(m+m′)²,  μ ← (mμ + m′μ′)/(m+m′),  m ← m+m′,
/// leaving classes that do not occur in the batch untouched.
class ClassCovStats {
 public:
  ClassCovStats() = default;
  ClassCovStats(std::size_t num_labels, std::size_t dim);

  /// features: B × dim, classes: B labels.
  void update(const Tensor& features, std::span<const Label> classes);

  std::size_t num_labels() const { return counts_.size(); }
  std::size_t dim() const { return dim_; }
  std::size_t count(Label j) const { return counts_.at(j); }
  const std::vector<double>& mean(Label j) const { return means_.at(j); }
  const Tensor& covariance(Label j) const { return covs_.at(j); }

 private:
  std::size_t dim_ = 0;
  std::vector<std::size_t> counts_;
  std::vector<std::vector<double>> means_;
  std::vector<Tensor> covs_;
};

/// Standard normal CDF.
double std_normal_cdf(double z);

/// sup over a uniform grid on [−8, 8] (step 1e-3) of |sigmoid(x) − Φ(βx)|.
double probit_sup_error(double beta);

/// Grid search over β ∈ [lo, hi] minimising probit_sup_error.
double fit_probit_slope(double lo = 0.5, double hi = 0.7, double step = 1e-4);

/// d[j][j'] = (w_{j'} − w_j)ᵀ Σ (w_{j'} − w_j) for the rows of `head`.
Tensor pairwise_quadratic(const Tensor& head, const Tensor& sigma);

/// Draws from 𝒩(a, λΣ) through a symmetric eigendecomposition of Σ whose eigenvalues are
/// clamped to >= eig_floor (round-off negatives become zero when the floor is zero).
class SemanticSampler {
 public:
  SemanticSampler(const Tensor& sigma, double lambda, double eig_floor = 0.0);

  std::vector<double> sample(std::span<const double> a, Rng& rng) const;
  bool is_identity() const { return identity_; }

 private:
  std::size_t dim_ = 0;
  bool identity_ = true;
  Tensor factor_;  // V diag(sqrt(λ e)), dim × dim
};

std::vector<double> sample_semantic(std::span<const double> a, const Tensor& sigma, double lambda, Rng& rng,
                                    double eig_floor = 0.0);

/// Closed-form estimate of E[softmax(Ŵ ã)] for ã ~ 𝒩(â, λΣ) via the sigmoid–probit
/// approximation:
///   p_j = 1 / (−l + Σ_{j'} 1/Φ(β û_{jj'}ᵀâ / sqrt(1 + λβ² û_{jj'}ᵀΣû_{jj'}))),  û_{jj'} = ŵ_j − ŵ_{j'}.
/// Φ is clamped to [1e-12, 1 − 1e-12] and the result renormalised to sum to one.
std::vector<double> probit_weak_probs(const Tensor& frozen_head, std::span<const double> features,
                                      const Tensor& sigma, double lambda, double beta);
/// Same map from logits ẑ = Ŵâ and the pairwise quadratic matrix of (Ŵ, Σ).
std::vector<double> probit_weak_probs_from_logits(std::span<const double> logits, const Tensor& pair_quad,
                                                  double lambda, double beta);

/// log p̲_j = w_jᵀa − log Σ_{j'} exp(w_{j'}ᵀa + (λ/2) u_{j'j}ᵀΣu_{j'j}) for every target j,
/// with u_{j'j} = w_{j'} − w_j. Each p̲_j is at most softmax_j, with equality at λΣ = 0.
std::vector<double> shifted_log_probs_from_logits(std::span<const double> logits, const Tensor& pair_quad,
                                                  double lambda);

struct ShiftedSoftmax {
  std::vector<double> probs;
  std::vector<double> log_probs;
};

ShiftedSoftmax shifted_softmax_probs(const Tensor& head, std::span<const double> features, const Tensor& sigma,
                                     double lambda);

}  // namespace plsp
