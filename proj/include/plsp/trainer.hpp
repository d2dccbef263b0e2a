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
#include <functional>
#include <string>
#include <span>
#include <vector>

#include "plsp/augment.hpp"
#include "plsp/metrics.hpp"
#include "plsp/model.hpp"
#include "plsp/pldata.hpp"
#include "plsp/rng.hpp"
#include "plsp/semstats.hpp"
#include "plsp/sgd.hpp"

namespace plsp {

struct TrainConfig {
  double gamma0 = 1.0;
  double lambda0 = 0.01;
  double tau0 = 0.75;
  std::size_t k = 200;
  std::size_t pretrain_epochs = 10;
  std::size_t epochs = 250;
  std::size_t iters = 200;
  std::size_t batch_l = 64;
  std::size_t batch_u = 256;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double beta = kDefaultProbitSlope;
  double tau_floor = 0.5;
  std::uint64_t seed = 0;
  bool deterministic = true;
  std::vector<std::size_t> hidden = {128, 64};
  AugmentSpec weak_aug = AugmentSpec::weak_defaults();
  AugmentSpec strong_aug = AugmentSpec::strong_defaults();

  /// Throws InvalidArgument on any violated range.
  void validate() const;
  SgdConfig sgd() const { return {lr, momentum, weight_decay}; }
};

/// min((t/T)·c0, c0). Throws InvalidArgument if T = 0.
double schedule_gamma(std::size_t t, std::size_t total, double gamma0);
double schedule_lambda(std::size_t t, std::size_t total, double lambda0);

/// τ(j) = clamp(σ(j)/max σ · τ0, τ_floor, τ0); τ0 everywhere when every σ(j) is zero.
std::vector<double> update_tau(std::span<const std::size_t> sigma, double tau0, double tau_floor);

struct ScheduleState {
  std::size_t epoch = 0;
  double gamma = 0.0;
  double lambda = 0.0;
  std::vector<double> tau;
  std::vector<std::size_t> sigma;  // confident counts of the previous epoch
};

/// Index stream over a pool: reshuffled passes without replacement, or uniform draws
/// with replacement when the pool is smaller than the batch.
class BatchSampler {
 public:
  BatchSampler(std::size_t pool, Rng rng);
  std::vector<std::size_t> next(std::size_t batch);

 private:
  void reshuffle();
  std::size_t pool_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

using MetricsSink = std::function<void(const MetricsRecord&)>;

/// He-initialised classifier for the dataset's input size and label count.
Classifier init_model(const PLDataset& data, const TrainConfig& config);

/// Disambiguation-free stage: `epochs` epochs of I mini-batches of size B_u on the
/// candidate-averaged loss, no augmentation. `test` may be null.
Classifier train_df(const PLDataset& data, Classifier model, const TrainConfig& config, std::size_t epochs,
                    const std::string& stage, const PLDataset* test, const MetricsSink& sink);

/// T0 epochs of the disambiguation-free loss.
Classifier pretrain(const PLDataset& data, Classifier model, const TrainConfig& config, const PLDataset* test = nullptr,
                    const MetricsSink& sink = {});

/// Semi-supervised stage with semantic augmentation (T epochs).
Classifier train_ss(const PLDataset& data, Classifier model, const TrainConfig& config, const PLDataset* test = nullptr,
                    const MetricsSink& sink = {}, std::vector<ScheduleState>* schedules = nullptr);

/// Full two-stage run from init_model.
Classifier train_plsp(const PLDataset& data, const TrainConfig& config, const PLDataset* test = nullptr,
                      const MetricsSink& sink = {});

/// Baseline with the same total epoch budget (T0 + T) spent on the disambiguation-free loss.
Classifier train_df_baseline(const PLDataset& data, const TrainConfig& config, const PLDataset* test = nullptr,
                             const MetricsSink& sink = {});

}  // namespace plsp
