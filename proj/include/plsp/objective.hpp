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
#include <optional>
#include <span>
#include <vector>

#include "plsp/autodiff.hpp"
#include "plsp/model.hpp"
#include "plsp/pldata.hpp"
#include "plsp/rng.hpp"
#include "plsp/semstats.hpp"
#include "plsp/tensor.hpp"

namespace plsp {

/// Floor applied inside every log of the objective.
inline constexpr double kLogFloor = 1e-12;

struct LabeledEntry {
  std::size_t index;
  Label label;
  friend bool operator==(const LabeledEntry&, const LabeledEntry&) = default;
};

struct UnlabeledEntry {
  std::size_t index;
  LabelMask candidates;
  friend bool operator==(const UnlabeledEntry&, const UnlabeledEntry&) = default;
};

/// Disjoint partition of the training set into pseudo-labeled Ω_l and pseudo-unlabeled Ω_u.
struct PseudoSplit {
  std::vector<LabeledEntry> labeled;
  std::vector<UnlabeledEntry> unlabeled;

  /// Throws InvalidArgument if the split overlaps, misses an instance, assigns a
  /// non-candidate pseudo label, or holds more than k instances of one class.
  void validate(std::span<const LabelMask> candidates, std::size_t k) const;
};

// ---- Disambiguation-free pre-training loss ----

/// mean_i (1/|C_i|) Σ_{j∈C_i} −log p_ij on probability rows. `clamped` counts logs hitting the floor.
double loss_df(const Tensor& probs, std::span<const LabelMask> candidates, std::size_t* clamped = nullptr);
/// Differentiable version on logits.
ad::Var loss_df(ad::Var logits, std::span<const LabelMask> candidates);

// ---- Class activation values and the pseudo split ----

/// v_j = z_j |z_j − 1| on raw logits.
std::vector<double> cav_scores(std::span<const double> logits);
/// argmax over the candidate set of the CAV; ties go to the lowest label.
Label cav_pseudo_label(std::span<const double> logits, const LabelMask& candidates);

/// Pseudo-label every instance by candidate CAV, keep per class the k highest-CAV
/// instances (ties to the lower index) as Ω_l, and put everything else in Ω_u.
PseudoSplit build_pseudo_split(const Tensor& logits, std::span<const LabelMask> candidates, std::size_t k);
PseudoSplit build_pseudo_split(const PLDataset& data, const FrozenClassifier& model, std::size_t k);

// ---- Pseudo-targets and the confidence indicator ----

/// p̂_j = 1(j∈C) p_j / Σ_{j'∈C} p_{j'}; nullopt when the candidate mass is zero.
std::optional<std::vector<double>> pseudo_target(std::span<const double> probs, const LabelMask& candidates);

/// 1 iff max_j p_j >= τ(argmax) and argmax ∈ C (argmax ties to the lowest label).
bool confidence_indicator(std::span<const double> probs, const LabelMask& candidates, std::span<const double> tau);

/// Everything the stop-gradient weak branch contributes for one Ω_u instance.
struct WeakTarget {
  Label pseudo_label = 0;            // ŷ from the weak-variant CAVs under Θ̂
  std::vector<double> weak_probs;    // closed-form E[softmax] of the weak branch
  bool confident = false;            // h
  std::optional<std::vector<double>> target;  // candidate-renormalised weak_probs
  double neg_entropy = 0.0;          // Σ_j target_j log target_j, 0 log 0 := 0
};

/// frozen_pair_quads[c] = pairwise_quadratic(Ŵ, Σ_c) for every class c.
WeakTarget evaluate_weak_branch(std::span<const double> frozen_logits, const LabelMask& candidates,
                                std::span<const Tensor> frozen_pair_quads, double lambda, double beta,
                                std::span<const double> tau);

std::vector<Tensor> pair_quads_for_all_classes(const Tensor& head, const ClassCovStats& stats);

/// Closed-form consistency term h·KL(target ‖ p̲^s) for one instance, without a tape.
struct RegTerm {
  double value = 0.0;          // h · KL
  double cross_entropy = 0.0;  // −Σ_j target_j log p̲^s_j (independent of h)
  bool confident = false;
  bool skipped = false;
};
RegTerm closed_form_reg_term(const WeakTarget& weak, std::span<const double> strong_logits,
                             const Tensor& live_pair_quad, double lambda);

// ---- Differentiable semantic losses ----

/// Row i, column j holds log p̲_ij, the MGF-shifted softmax using Σ_{classes[i]}.
/// At λ = 0 this is exactly log_softmax(logits).
ad::Var shifted_log_softmax(ad::Var logits, ad::Var head, std::span<const Label> classes,
                            const ClassCovStats& stats, double lambda);

/// mean_i −log p̲_{i,y_i}; a constant 0 for an empty batch.
ad::Var loss_sup_semantic(ad::Var shifted_logp, std::span<const Label> labels);
/// mean_i Σ_{j∉C_i} −log(1 − p̲_ij). `clamped` counts logs hitting the floor.
ad::Var loss_complementary_semantic(ad::Var shifted_logp, std::span<const LabelMask> candidates,
                                    std::size_t* clamped = nullptr);
/// mean over the whole batch of h_i · KL(target_i ‖ p̲^s_i); targets carry no gradient.
ad::Var reg_consistency_semantic(ad::Var strong_shifted_logp, std::span<const WeakTarget> weak);

// ---- Full objective ----

struct ObjectiveSettings {
  double gamma = 1.0;
  double lambda = 0.0;
  double beta = kDefaultProbitSlope;
  std::vector<double> tau;  // per-class thresholds
};

/// Row layout of the stacked feature batch fed to build_objective:
/// [labeled originals | unlabeled originals | unlabeled strong variants].
struct BatchLayout {
  std::size_t labeled = 0;
  std::size_t unlabeled = 0;
};

struct BatchLossReport {
  double loss_l = 0.0;
  double reg_u = 0.0;
  double loss_cl = 0.0;
  double total = 0.0;
  std::vector<std::size_t> sigma_increments;  // confident count per pseudo label ŷ
  std::size_t passed = 0;                     // instances with h = 1
  std::size_t skipped = 0;                    // degenerate pseudo-targets
  std::size_t clamped = 0;                    // log-floor events
  double h_pass_rate = 0.0;
};

struct BatchObjective {
  ad::Var total;
  BatchLossReport report;
};

/// γ(L̄_l + R̄_u) + L̄_cl.
double total_objective(const BatchLossReport& report, double gamma);

/// Weak-branch targets for an Ω_u batch under the frozen copy.
std::vector<WeakTarget> evaluate_weak_batch(const FrozenClassifier& frozen, const Tensor& weak_x,
                                            std::span<const LabelMask> candidates, const ClassCovStats& stats,
                                            const ObjectiveSettings& settings);

/// Builds the differentiable objective from the stacked features (see BatchLayout).
BatchObjective build_objective(const BoundParams& bound, ad::Var stacked_features, BatchLayout layout,
                               std::span<const Label> labeled_y, std::span<const LabelMask> unlabeled_c,
                               std::span<const WeakTarget> weak, const ClassCovStats& stats,
                               const ObjectiveSettings& settings);

// ---- Monte-Carlo oracle ----

/// One Ω_u instance in feature space, with Σ already selected by the weak pseudo label.
struct McInstance {
  std::vector<double> weak_features;    // â^w = g(x^w; Φ̂)
  std::vector<double> strong_features;  // a^s = g(x^s; Φ)
  Tensor frozen_head;                   // Ŵ
  Tensor head;                          // W
  LabelMask candidates;
  Tensor sigma;                         // Σ_ŷ
  double lambda = 0.0;
  double beta = kDefaultProbitSlope;
  std::vector<double> tau;
};

struct McRegEstimate {
  double estimate = 0.0;             // mean over K² pairs of h·KL, sampled exactly
  double standard_error = 0.0;       // first-order two-sample V-statistic SE
  double strong_ce = 0.0;            // E[−Σ_j target_j log p^s_j] with the closed-form target
  double strong_ce_se = 0.0;
  double closed_form_ce = 0.0;       // −Σ_j target_j log p̲^s_j
  double closed_form_value = 0.0;    // h·KL with both closed forms
};

McRegEstimate mc_oracle_reg(const McInstance& instance, std::size_t samples, Rng& rng);

}  // namespace plsp
