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

#include "plsp/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "plsp/errors.hpp"
#include "plsp/kernels.hpp"

namespace plsp {

void PseudoSplit::validate(std::span<const LabelMask> candidates, std::size_t k) const {
  const std::size_t n = candidates.size();
  std::vector<char> seen(n, 0);
  std::vector<std::size_t> per_class(candidates.empty() ? 0 : candidates[0].num_labels(), 0);
  auto mark = [&](std::size_t i) {
    if (i >= n) throw InvalidArgument("pseudo split index out of range");
    if (seen[i]) throw InvalidArgument("instance " + std::to_string(i) + " appears twice in the pseudo split");
    seen[i] = 1;
  };
  for (const auto& e : labeled) {
    mark(e.index);
    if (!candidates[e.index].contains(e.label)) throw InvalidArgument("pseudo label outside the candidate set");
    if (++per_class.at(e.label) > k) throw InvalidArgument("more than k pseudo-labeled instances in one class");
  }
  for (const auto& e : unlabeled) {
    mark(e.index);
    if (e.candidates != candidates[e.index]) throw InvalidArgument("unlabeled entry carries the wrong candidate set");
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw InvalidArgument("pseudo split does not cover the dataset");
}

double loss_df(const Tensor& probs, std::span<const LabelMask> candidates, std::size_t* clamped) {
  if (probs.rows() != candidates.size()) throw ShapeError("loss_df: batch size mismatch");
  if (probs.rows() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto labels = candidates[i].labels();
    if (labels.empty()) throw InvalidArgument("loss_df: empty candidate set");
    double s = 0.0;
    for (Label j : labels) {
      const double p = probs(i, j);
      if (p < kLogFloor && clamped) ++*clamped;
      s -= std::log(std::max(p, kLogFloor));
    }
    total += s / static_cast<double>(labels.size());
  }
  return total / static_cast<double>(probs.rows());
}

ad::Var loss_df(ad::Var logits, std::span<const LabelMask> candidates) {
  const std::size_t b = logits.rows(), l = logits.cols();
  if (b != candidates.size()) throw ShapeError("loss_df: batch size mismatch");
  if (b == 0) return logits.graph()->constant(Tensor::scalar(0.0));
  Tensor weights(b, l);
  for (std::size_t i = 0; i < b; ++i) {
    const auto labels = candidates[i].labels();
    if (labels.empty()) throw InvalidArgument("loss_df: empty candidate set");
    for (Label j : labels) weights(i, j) = -1.0 / (static_cast<double>(labels.size()) * static_cast<double>(b));
  }
  ad::Var w = logits.graph()->constant(std::move(weights));
  return ad::sum(ad::mul(ad::log_softmax(logits), w));
}

std::vector<double> cav_scores(std::span<const double> logits) {
  std::vector<double> v(logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j) v[j] = logits[j] * std::abs(logits[j] - 1.0);
  return v;
}

Label cav_pseudo_label(std::span<const double> logits, const LabelMask& candidates) {
  Label best = 0;
  double best_v = 0.0;
  bool found = false;
  for (Label j = 0; j < logits.size(); ++j) {
    if (!candidates.contains(j)) continue;
    const double v = logits[j] * std::abs(logits[j] - 1.0);
    if (!found || v > best_v) {
      best = j;
      best_v = v;
      found = true;
    }
  }
  if (!found) throw InvalidArgument("cav_pseudo_label: empty candidate set");
  return best;
}

PseudoSplit build_pseudo_split(const Tensor& logits, std::span<const LabelMask> candidates, std::size_t k) {
  const std::size_t n = logits.rows(), l = logits.cols();
  if (candidates.size() != n) throw ShapeError("build_pseudo_split: candidate count mismatch");
  std::vector<Label> label(n);
  std::vector<double> score(n);
  std::vector<std::vector<std::size_t>> by_class(l);
  for (std::size_t i = 0; i < n; ++i) {
    label[i] = cav_pseudo_label(logits.row(i), candidates[i]);
    const double z = logits(i, label[i]);
    score[i] = z * std::abs(z - 1.0);
    by_class[label[i]].push_back(i);
  }
  std::vector<char> selected(n, 0);
  for (auto& members : by_class) {
    const std::size_t take = std::min(k, members.size());
    std::partial_sort(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take), members.end(),
                      [&](std::size_t a, std::size_t b) { return score[a] != score[b] ? score[a] > score[b] : a < b; });
    for (std::size_t r = 0; r < take; ++r) selected[members[r]] = 1;
  }
  PseudoSplit split;
  for (std::size_t i = 0; i < n; ++i) {
    if (selected[i]) {
      split.labeled.push_back({i, label[i]});
    } else {
      split.unlabeled.push_back({i, candidates[i]});
    }
  }
  return split;
}

PseudoSplit build_pseudo_split(const PLDataset& data, const FrozenClassifier& model, std::size_t k) {
  std::vector<std::size_t> all(data.n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const Tensor logits = model.logits(rows_to_tensor(data.features, data.dim(), all));
  return build_pseudo_split(logits, data.candidates, k);
}

std::optional<std::vector<double>> pseudo_target(std::span<const double> probs, const LabelMask& candidates) {
  double mass = 0.0;
  for (Label j = 0; j < probs.size(); ++j) {
    if (candidates.contains(j)) mass += probs[j];
  }
  if (!(mass > 0.0)) return std::nullopt;
  std::vector<double> t(probs.size(), 0.0);
  for (Label j = 0; j < probs.size(); ++j) {
    if (candidates.contains(j)) t[j] = probs[j] / mass;
  }
  return t;
}

bool confidence_indicator(std::span<const double> probs, const LabelMask& candidates, std::span<const double> tau) {
  if (probs.empty()) return false;
  const auto arg = static_cast<Label>(std::max_element(probs.begin(), probs.end()) - probs.begin());
  return probs[arg] >= tau[arg] && candidates.contains(arg);
}

namespace {

double negative_entropy(std::span<const double> t) {
  double s = 0.0;
  for (double v : t) {
    if (v > 0.0) s += v * std::log(v);
  }
  return s;
}

}  // namespace

WeakTarget evaluate_weak_branch(std::span<const double> frozen_logits, const LabelMask& candidates,
                                std::span<const Tensor> frozen_pair_quads, double lambda, double beta,
                                std::span<const double> tau) {
  WeakTarget w;
  w.pseudo_label = cav_pseudo_label(frozen_logits, candidates);
  w.weak_probs = probit_weak_probs_from_logits(frozen_logits, frozen_pair_quads[w.pseudo_label], lambda, beta);
  w.confident = confidence_indicator(w.weak_probs, candidates, tau);
  w.target = pseudo_target(w.weak_probs, candidates);
  if (w.target) w.neg_entropy = negative_entropy(*w.target);
  return w;
}

std::vector<Tensor> pair_quads_for_all_classes(const Tensor& head, const ClassCovStats& stats) {
  std::vector<Tensor> out;
  out.reserve(head.rows());
  for (Label c = 0; c < head.rows(); ++c) out.push_back(pairwise_quadratic(head, stats.covariance(c)));
  return out;
}

RegTerm closed_form_reg_term(const WeakTarget& weak, std::span<const double> strong_logits,
                             const Tensor& live_pair_quad, double lambda) {
  RegTerm r;
  r.confident = weak.confident;
  if (!weak.target) {
    r.skipped = true;
    return r;
  }
  const auto logp = shifted_log_probs_from_logits(strong_logits, live_pair_quad, lambda);
  for (std::size_t j = 0; j < logp.size(); ++j) {
    if ((*weak.target)[j] > 0.0) r.cross_entropy -= (*weak.target)[j] * logp[j];
  }
  r.value = weak.confident ? weak.neg_entropy + r.cross_entropy : 0.0;
  return r;
}

ad::Var shifted_log_softmax(ad::Var logits, ad::Var head, std::span<const Label> classes,
                            const ClassCovStats& stats, double lambda) {
  const std::size_t b = logits.rows(), l = logits.cols();
  if (classes.size() != b) throw ShapeError("shifted_log_softmax: class count mismatch");
  if (lambda == 0.0 || b == 0) return ad::log_softmax(logits);

  std::vector<Label> used(classes.begin(), classes.end());
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());
  std::vector<std::size_t> slot(l, 0);
  std::vector<ad::Var> quads;
  for (std::size_t s = 0; s < used.size(); ++s) {
    slot[used[s]] = s;
    quads.push_back(ad::pairwise_quadratic(head, stats.covariance(used[s])));
  }
  ad::Var stacked = ad::vstack(quads);

  // Row (i, j) of the expanded matrix holds z_i + (λ/2) d_{y_i}[j, ·].
  std::vector<std::size_t> quad_rows(b * l), logit_rows(b * l);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < l; ++j) {
      quad_rows[i * l + j] = slot[classes[i]] * l + j;
      logit_rows[i * l + j] = i;
    }
  }
  ad::Var shifted = ad::add(ad::gather_rows(logits, logit_rows),
                            ad::scale(ad::gather_rows(stacked, quad_rows), 0.5 * lambda));
  ad::Var logp = ad::sub(ad::reshape(logits, b * l, 1), ad::row_logsumexp(shifted));
  return ad::reshape(logp, b, l);
}

ad::Var loss_sup_semantic(ad::Var shifted_logp, std::span<const Label> labels) {
  const std::size_t b = shifted_logp.rows();
  if (labels.size() != b) throw ShapeError("loss_sup_semantic: label count mismatch");
  if (b == 0) return shifted_logp.graph()->constant(Tensor::scalar(0.0));
  Tensor pick(b, shifted_logp.cols());
  for (std::size_t i = 0; i < b; ++i) pick(i, labels[i]) = -1.0 / static_cast<double>(b);
  return ad::sum(ad::mul(shifted_logp, shifted_logp.graph()->constant(std::move(pick))));
}

ad::Var loss_complementary_semantic(ad::Var shifted_logp, std::span<const LabelMask> candidates,
                                    std::size_t* clamped) {
  const std::size_t b = shifted_logp.rows(), l = shifted_logp.cols();
  if (candidates.size() != b) throw ShapeError("loss_complementary_semantic: candidate count mismatch");
  if (b == 0) return shifted_logp.graph()->constant(Tensor::scalar(0.0));
  Tensor mask(b, l);
  for (std::size_t i = 0; i < b; ++i) {
    for (Label j = 0; j < l; ++j) {
      if (!candidates[i].contains(j)) mask(i, j) = -1.0 / static_cast<double>(b);
    }
  }
  ad::Var complement = ad::add_scalar(ad::scale(ad::exp(shifted_logp), -1.0), 1.0);
  if (clamped) {
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < l; ++j) {
        if (mask(i, j) != 0.0 && complement.value()(i, j) <= kLogFloor) ++*clamped;
      }
    }
  }
  return ad::sum(ad::mul(ad::log(complement, kLogFloor), shifted_logp.graph()->constant(std::move(mask))));
}

ad::Var reg_consistency_semantic(ad::Var strong_shifted_logp, std::span<const WeakTarget> weak) {
  const std::size_t b = strong_shifted_logp.rows(), l = strong_shifted_logp.cols();
  if (weak.size() != b) throw ShapeError("reg_consistency_semantic: batch size mismatch");
  ad::Graph& g = *strong_shifted_logp.graph();
  if (b == 0) return g.constant(Tensor::scalar(0.0));
  Tensor weights(b, l);
  double constant = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (!weak[i].confident || !weak[i].target) continue;
    // Zero-mass target entries are skipped so 0·log 0 contributes nothing.
    for (std::size_t j = 0; j < l; ++j) weights(i, j) = (*weak[i].target)[j];
    constant += weak[i].neg_entropy;
  }
  const double inv_b = 1.0 / static_cast<double>(b);
  for (double& w : weights.data()) w *= -inv_b;
  ad::Var ce = ad::sum(ad::mul(strong_shifted_logp, g.constant(std::move(weights))));
  return ad::add_scalar(ce, constant * inv_b);
}

double total_objective(const BatchLossReport& report, double gamma) {
  return gamma * (report.loss_l + report.reg_u) + report.loss_cl;
}

std::vector<WeakTarget> evaluate_weak_batch(const FrozenClassifier& frozen, const Tensor& weak_x,
                                            std::span<const LabelMask> candidates, const ClassCovStats& stats,
                                            const ObjectiveSettings& settings) {
  const std::size_t b = weak_x.rows();
  if (candidates.size() != b) throw ShapeError("evaluate_weak_batch: candidate count mismatch");
  if (b == 0) return {};
  const Tensor logits = frozen.logits(weak_x);
  const std::size_t l = logits.cols();
  std::vector<Tensor> quads;
  if (settings.lambda > 0.0) {
    quads = pair_quads_for_all_classes(frozen.head(), stats);
  } else {
    quads.assign(l, Tensor(l, l));
  }
  std::vector<WeakTarget> out(b);
  const auto rows = static_cast<std::ptrdiff_t>(b);
#pragma omp parallel for schedule(static) if (b >= 64)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    out[i] = evaluate_weak_branch(logits.row(i), candidates[i], quads, settings.lambda, settings.beta, settings.tau);
  }
  return out;
}

BatchObjective build_objective(const BoundParams& bound, ad::Var stacked_features, BatchLayout layout,
                               std::span<const Label> labeled_y, std::span<const LabelMask> unlabeled_c,
                               std::span<const WeakTarget> weak, const ClassCovStats& stats,
                               const ObjectiveSettings& settings) {
  const std::size_t nl = layout.labeled, nu = layout.unlabeled;
  if (stacked_features.rows() != nl + 2 * nu) throw ShapeError("build_objective: stacked batch does not match layout");
  if (labeled_y.size() != nl || unlabeled_c.size() != nu || weak.size() != nu) {
    throw ShapeError("build_objective: batch metadata does not match layout");
  }
  ad::Graph& g = *stacked_features.graph();
  const std::size_t l = bound.head.rows();
  ad::Var logits = Classifier::logits_from_features(bound, stacked_features);

  auto rows = [](std::size_t begin, std::size_t count) {
    std::vector<std::size_t> r(count);
    std::iota(r.begin(), r.end(), begin);
    return r;
  };

  BatchObjective out;
  BatchLossReport& rep = out.report;
  rep.sigma_increments.assign(l, 0);

  ad::Var loss_l = g.constant(Tensor::scalar(0.0));
  if (nl > 0) {
    ad::Var z = ad::gather_rows(logits, rows(0, nl));
    loss_l = loss_sup_semantic(shifted_log_softmax(z, bound.head, labeled_y, stats, settings.lambda), labeled_y);
  }

  ad::Var reg_u = g.constant(Tensor::scalar(0.0));
  ad::Var loss_cl = g.constant(Tensor::scalar(0.0));
  if (nu > 0) {
    std::vector<Label> yhat(nu);
    for (std::size_t i = 0; i < nu; ++i) {
      yhat[i] = weak[i].pseudo_label;
      if (!weak[i].target) {
        ++rep.skipped;
      } else if (weak[i].confident) {
        ++rep.passed;
        ++rep.sigma_increments[weak[i].pseudo_label];
      }
    }
    ad::Var z_u = ad::gather_rows(logits, rows(nl, nu));
    ad::Var z_s = ad::gather_rows(logits, rows(nl + nu, nu));
    loss_cl = loss_complementary_semantic(shifted_log_softmax(z_u, bound.head, yhat, stats, settings.lambda),
                                          unlabeled_c, &rep.clamped);
    reg_u = reg_consistency_semantic(shifted_log_softmax(z_s, bound.head, yhat, stats, settings.lambda), weak);
    rep.h_pass_rate = static_cast<double>(rep.passed) / static_cast<double>(nu);
  }

  out.total = ad::add(ad::scale(ad::add(loss_l, reg_u), settings.gamma), loss_cl);
  rep.loss_l = loss_l.value().item();
  rep.reg_u = reg_u.value().item();
  rep.loss_cl = loss_cl.value().item();
  rep.total = out.total.value().item();
  return out;
}

namespace {

std::vector<double> matvec(const Tensor& m, std::span<const double> v) {
  std::vector<double> out(m.rows());
  kernels::serial::gemm_nt(m.data(), v, out, m.rows(), m.cols(), 1);
  return out;
}

double sample_variance(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

McRegEstimate mc_oracle_reg(const McInstance& in, std::size_t samples, Rng& rng) {
  if (samples == 0) throw InvalidArgument("mc_oracle_reg needs at least one sample");
  const std::size_t l = in.head.rows();
  const double k = static_cast<double>(samples);
  McRegEstimate est;

  // Closed forms for reference.
  const Tensor frozen_quad = pairwise_quadratic(in.frozen_head, in.sigma);
  const Tensor live_quad = pairwise_quadratic(in.head, in.sigma);
  const auto weak_closed = probit_weak_probs_from_logits(matvec(in.frozen_head, in.weak_features), frozen_quad, in.lambda, in.beta);
  const auto target_closed = pseudo_target(weak_closed, in.candidates);
  const bool h_closed = confidence_indicator(weak_closed, in.candidates, in.tau);
  const auto strong_closed = shifted_log_probs_from_logits(matvec(in.head, in.strong_features), live_quad, in.lambda);
  if (target_closed) {
    for (std::size_t j = 0; j < l; ++j) {
      if ((*target_closed)[j] > 0.0) est.closed_form_ce -= (*target_closed)[j] * strong_closed[j];
    }
    est.closed_form_value = h_closed ? negative_entropy(*target_closed) + est.closed_form_ce : 0.0;
  }

  const SemanticSampler sampler(in.sigma, in.lambda);

  // Weak draws: h, candidate target and its negative entropy per draw.
  std::vector<double> h_negent(samples, 0.0);
  std::vector<std::vector<double>> h_target(samples, std::vector<double>(l, 0.0));
  for (std::size_t s = 0; s < samples; ++s) {
    const auto p = softmax(matvec(in.frozen_head, sampler.sample(in.weak_features, rng)));
    const auto t = pseudo_target(p, in.candidates);
    if (!t || !confidence_indicator(p, in.candidates, in.tau)) continue;
    h_negent[s] = negative_entropy(*t);
    h_target[s] = *t;
  }

  // Strong draws: log-softmax per draw.
  std::vector<std::vector<double>> strong_logp(samples);
  std::vector<double> mean_logp(l, 0.0);
  for (std::size_t s = 0; s < samples; ++s) {
    const auto z = matvec(in.head, sampler.sample(in.strong_features, rng));
    const double lse = logsumexp(z);
    strong_logp[s].resize(l);
    for (std::size_t j = 0; j < l; ++j) {
      strong_logp[s][j] = z[j] - lse;
      mean_logp[j] += strong_logp[s][j] / k;
    }
  }

  // The K² pair average factorises: f(a, b) = h_a negent_a − Σ_j h_a t_aj logp_bj.
  std::vector<double> mean_ht(l, 0.0);
  double mean_hn = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    mean_hn += h_negent[s] / k;
    for (std::size_t j = 0; j < l; ++j) mean_ht[j] += h_target[s][j] / k;
  }
  std::vector<double> row_means(samples), col_means(samples), ce_draws(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    double r = h_negent[s], c = mean_hn, ce = 0.0;
    for (std::size_t j = 0; j < l; ++j) {
      r -= h_target[s][j] * mean_logp[j];
      c -= mean_ht[j] * strong_logp[s][j];
      if (target_closed && (*target_closed)[j] > 0.0) ce -= (*target_closed)[j] * strong_logp[s][j];
    }
    row_means[s] = r;
    col_means[s] = c;
    ce_draws[s] = ce;
  }
  est.estimate = std::accumulate(row_means.begin(), row_means.end(), 0.0) / k;
  const double col_mean = std::accumulate(col_means.begin(), col_means.end(), 0.0) / k;
  est.standard_error = std::sqrt((sample_variance(row_means, est.estimate) + sample_variance(col_means, col_mean)) / k);
  est.strong_ce = std::accumulate(ce_draws.begin(), ce_draws.end(), 0.0) / k;
  est.strong_ce_se = std::sqrt(sample_variance(ce_draws, est.strong_ce) / k);
  return est;
}

}  // namespace plsp
