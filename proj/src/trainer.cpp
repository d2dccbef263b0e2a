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

#include "plsp/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "plsp/errors.hpp"
#include "plsp/objective.hpp"

namespace plsp {

namespace {

constexpr std::uint64_t kTagInit = 0x696e6974;
constexpr std::uint64_t kTagDfBatches = 0x64666274;
constexpr std::uint64_t kTagLabeledBatches = 0x6c627463;
constexpr std::uint64_t kTagUnlabeledBatches = 0x75627463;
constexpr std::uint64_t kTagAugment = 0x61756720;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

void require(bool ok, const char* what) {
  if (!ok) throw InvalidArgument(what);
}

double schedule(std::size_t t, std::size_t total, double c0) {
  if (total == 0) throw InvalidArgument("schedule needs T >= 1");
  const double ratio = static_cast<double>(t) / static_cast<double>(total);
  return std::min(ratio * c0, c0);
}

class Stopwatch {
 public:
  explicit Stopwatch(bool enabled) : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    if (!enabled_) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

void fill_scores(MetricsRecord& r, const Classifier& model, const PLDataset& data, const PLDataset* test) {
  if (const auto train = evaluate(model, data)) {
    r.train_macro_f1 = train->macro;
    r.train_micro_f1 = train->micro;
    r.macro_f1 = train->macro;
    r.micro_f1 = train->micro;
  }
  if (test) {
    if (const auto s = evaluate(model, *test)) {
      r.macro_f1 = s->macro;
      r.micro_f1 = s->micro;
    }
  }
}

void sgd_update(Classifier& model, const BoundParams& bound, ad::Gradients& grads, Sgd& opt) {
  const std::vector<Tensor> g = model.gradients(bound, grads);
  const std::vector<Tensor*> params = model.tensors();
  opt.step(params, g);
}

}  // namespace

void TrainConfig::validate() const {
  require(tau0 > 0.5 && tau0 <= 1.0, "tau0 must lie in (0.5, 1]");
  require(tau_floor > 0.0 && tau_floor <= tau0, "tau_floor must lie in (0, tau0]");
  require(gamma0 >= 0.0 && std::isfinite(gamma0), "gamma0 must be finite and >= 0");
  require(lambda0 >= 0.0 && std::isfinite(lambda0), "lambda0 must be finite and >= 0");
  require(beta > 0.0 && std::isfinite(beta), "beta must be finite and > 0");
  require(!hidden.empty(), "hidden must list at least one layer");
  for (std::size_t h : hidden) require(h > 0, "hidden layer sizes must be positive");
  sgd().validate();
  require(weak_aug.kind == AugmentKind::kWeak, "weak augmentation must be of weak kind");
  require(strong_aug.kind == AugmentKind::kStrong, "strong augmentation must be of strong kind");
}

double schedule_gamma(std::size_t t, std::size_t total, double gamma0) { return schedule(t, total, gamma0); }
double schedule_lambda(std::size_t t, std::size_t total, double lambda0) { return schedule(t, total, lambda0); }

std::vector<double> update_tau(std::span<const std::size_t> sigma, double tau0, double tau_floor) {
  const std::size_t peak = sigma.empty() ? 0 : *std::max_element(sigma.begin(), sigma.end());
  std::vector<double> tau(sigma.size(), tau0);
  if (peak == 0) return tau;
  for (std::size_t j = 0; j < sigma.size(); ++j) {
    const double eta = static_cast<double>(sigma[j]) / static_cast<double>(peak);
    tau[j] = std::clamp(eta * tau0, tau_floor, tau0);
  }
  return tau;
}

BatchSampler::BatchSampler(std::size_t pool, Rng rng) : pool_(pool), rng_(rng), order_(pool) {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  reshuffle();
}

void BatchSampler::reshuffle() {
  for (std::size_t i = pool_; i > 1; --i) {
    std::swap(order_[i - 1], order_[uniform_index(rng_, i)]);
  }
  pos_ = 0;
}

std::vector<std::size_t> BatchSampler::next(std::size_t batch) {
  std::vector<std::size_t> out;
  if (pool_ == 0) return out;
  out.reserve(batch);
  if (pool_ < batch) {
    for (std::size_t b = 0; b < batch; ++b) out.push_back(uniform_index(rng_, pool_));
    return out;
  }
  for (std::size_t b = 0; b < batch; ++b) {
    if (pos_ == pool_) reshuffle();
    out.push_back(order_[pos_++]);
  }
  return out;
}

Classifier init_model(const PLDataset& data, const TrainConfig& config) {
  Rng rng = make_substream(config.seed, {kTagInit});
  return Classifier::init(data.dim(), config.hidden, data.num_labels, rng);
}

Classifier train_df(const PLDataset& data, Classifier model, const TrainConfig& config, std::size_t epochs,
                    const std::string& stage, const PLDataset* test, const MetricsSink& sink) {
  config.validate();
  data.validate();
  Sgd opt(config.sgd());
  BatchSampler sampler(data.n, make_substream(config.seed, {kTagDfBatches, fnv1a(stage)}));
  const Stopwatch clock(!config.deterministic);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    double loss_sum = 0.0;
    for (std::size_t it = 0; it < config.iters; ++it) {
      const auto rows = sampler.next(config.batch_u);
      std::vector<LabelMask> cands;
      cands.reserve(rows.size());
      for (std::size_t i : rows) cands.push_back(data.candidates[i]);
      ad::Graph g;
      const BoundParams bound = model.bind(g);
      ad::Var x = g.constant(rows_to_tensor(data.features, data.dim(), rows));
      ad::Var loss = loss_df(Classifier::logits_from_features(bound, model.features(bound, x)), cands);
      loss_sum += loss.value().item();
      ad::Gradients grads = g.backward(loss);
      sgd_update(model, bound, grads, opt);
    }
    if (sink) {
      MetricsRecord r;
      r.stage = stage;
      r.epoch = epoch;
      r.loss_df = config.iters ? loss_sum / static_cast<double>(config.iters) : 0.0;
      r.loss_total = r.loss_df;
      r.omega_u = data.n;
      fill_scores(r, model, data, test);
      r.wall_seconds = clock.seconds();
      sink(r);
    }
  }
  return model;
}

Classifier pretrain(const PLDataset& data, Classifier model, const TrainConfig& config, const PLDataset* test,
                    const MetricsSink& sink) {
  return train_df(data, std::move(model), config, config.pretrain_epochs, "pretrain", test, sink);
}

Classifier train_ss(const PLDataset& data, Classifier model, const TrainConfig& config, const PLDataset* test,
                    const MetricsSink& sink, std::vector<ScheduleState>* schedules) {
  config.validate();
  data.validate();
  const std::size_t l = data.num_labels, dim = data.dim();
  Sgd opt(config.sgd());
  ClassCovStats stats(l, model.feature_dim());
  ScheduleState state;
  state.sigma.assign(l, 0);
  const Stopwatch clock(!config.deterministic);
  std::uint64_t step = 0;

  for (std::size_t t = 0; t < config.epochs; ++t) {
    state.epoch = t;
    state.gamma = schedule_gamma(t, config.epochs, config.gamma0);
    state.lambda = schedule_lambda(t, config.epochs, config.lambda0);
    state.tau = update_tau(state.sigma, config.tau0, config.tau_floor);
    if (schedules) schedules->push_back(state);

    const PseudoSplit split = build_pseudo_split(data, snapshot_frozen(model), config.k);
    BatchSampler sample_l(split.labeled.size(), make_substream(config.seed, {kTagLabeledBatches, t}));
    BatchSampler sample_u(split.unlabeled.size(), make_substream(config.seed, {kTagUnlabeledBatches, t}));
    const ObjectiveSettings settings{state.gamma, state.lambda, config.beta, state.tau};

    std::vector<std::size_t> sigma_next(l, 0);
    MetricsRecord rec;
    double h_sum = 0.0;
    for (std::size_t it = 0; it < config.iters; ++it, ++step) {
      const auto pick_l = sample_l.next(config.batch_l);
      const auto pick_u = sample_u.next(config.batch_u);
      const std::size_t nl = pick_l.size(), nu = pick_u.size();

      std::vector<std::size_t> rows_l(nl), rows_u(nu);
      std::vector<Label> labels(nl);
      std::vector<LabelMask> cands;
      cands.reserve(nu);
      for (std::size_t b = 0; b < nl; ++b) {
        rows_l[b] = split.labeled[pick_l[b]].index;
        labels[b] = split.labeled[pick_l[b]].label;
      }
      for (std::size_t b = 0; b < nu; ++b) {
        rows_u[b] = split.unlabeled[pick_u[b]].index;
        cands.push_back(split.unlabeled[pick_u[b]].candidates);
      }

      // Θ̂ for the weak branch.
      const FrozenClassifier frozen = snapshot_frozen(model);

      Tensor stacked(nl + 2 * nu, dim);
      Tensor weak_x(nu, dim);
      for (std::size_t b = 0; b < nl; ++b) {
        const auto x = data.row(rows_l[b]);
        std::copy(x.begin(), x.end(), stacked.row(b).begin());
      }
      const auto nu_signed = static_cast<std::ptrdiff_t>(nu);
#pragma omp parallel for schedule(static) if (nu >= 64)
      for (std::ptrdiff_t bb = 0; bb < nu_signed; ++bb) {
        const auto b = static_cast<std::size_t>(bb);
        const std::size_t i = rows_u[b];
        const auto x = data.row(i);
        std::copy(x.begin(), x.end(), stacked.row(nl + b).begin());
        Rng weak_rng = make_substream(config.seed, {kTagAugment, step, b, i, kTagWeak});
        Rng strong_rng = make_substream(config.seed, {kTagAugment, step, b, i, kTagStrong});
        const auto xw = weak(x, data.shape, config.weak_aug, weak_rng);
        const auto xs = strong(x, data.shape, config.strong_aug, strong_rng);
        std::copy(xw.begin(), xw.end(), weak_x.row(b).begin());
        std::copy(xs.begin(), xs.end(), stacked.row(nl + nu + b).begin());
      }

      ad::Graph g;
      const BoundParams bound = model.bind(g);
      ad::Var feats = model.features(bound, g.constant(std::move(stacked)));

      // Covariance statistics move before this step's loss and never during backward.
      if (nl > 0) {
        Tensor labeled_feats(nl, feats.cols());
        for (std::size_t b = 0; b < nl; ++b) {
          const auto src = feats.value().row(b);
          std::copy(src.begin(), src.end(), labeled_feats.row(b).begin());
        }
        stats.update(labeled_feats, labels);
      }

      const auto weak_targets = evaluate_weak_batch(frozen, weak_x, cands, stats, settings);
      BatchObjective obj = build_objective(bound, feats, {nl, nu}, labels, cands, weak_targets, stats, settings);
      ad::Gradients grads = g.backward(obj.total);
      sgd_update(model, bound, grads, opt);

      const BatchLossReport& rep = obj.report;
      for (std::size_t j = 0; j < l; ++j) sigma_next[j] += rep.sigma_increments[j];
      rec.loss_l += rep.loss_l;
      rec.reg_u += rep.reg_u;
      rec.loss_cl += rep.loss_cl;
      rec.loss_total += rep.total;
      rec.clamped += rep.clamped;
      rec.skipped += rep.skipped;
      h_sum += rep.h_pass_rate;
    }
    state.sigma = sigma_next;

    if (sink) {
      const double inv = config.iters ? 1.0 / static_cast<double>(config.iters) : 0.0;
      rec.stage = "ss";
      rec.epoch = t;
      rec.loss_l *= inv;
      rec.reg_u *= inv;
      rec.loss_cl *= inv;
      rec.loss_total *= inv;
      rec.h_pass_rate = h_sum * inv;
      rec.gamma = state.gamma;
      rec.lambda = state.lambda;
      rec.tau = state.tau;
      rec.omega_l = split.labeled.size();
      rec.omega_u = split.unlabeled.size();
      fill_scores(rec, model, data, test);
      rec.wall_seconds = clock.seconds();
      sink(rec);
    }
  }
  return model;
}

Classifier train_plsp(const PLDataset& data, const TrainConfig& config, const PLDataset* test,
                      const MetricsSink& sink) {
  Classifier model = pretrain(data, init_model(data, config), config, test, sink);
  return train_ss(data, std::move(model), config, test, sink);
}

Classifier train_df_baseline(const PLDataset& data, const TrainConfig& config, const PLDataset* test,
                             const MetricsSink& sink) {
  return train_df(data, init_model(data, config), config, config.pretrain_epochs + config.epochs, "df", test, sink);
}

}  // namespace plsp
