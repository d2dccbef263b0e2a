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

#include <span>
#include <vector>

#include "plsp/tensor.hpp"

namespace plsp {

struct SgdConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;

  /// Throws InvalidArgument unless lr > 0, momentum in [0, 1), weight_decay >= 0.
  /// lr = 0 is accepted by sgd_step itself (identity update) but not as a training setting.
  void validate() const;
};

/// One classic-momentum step on a single tensor:
///   v <- momentum * v + grad + weight_decay * param
///   param <- param - lr * v
/// `velocity` is zero-initialised on first use.
void sgd_step(Tensor& param, const Tensor& grad, const SgdConfig& config, Tensor& velocity);

/// Momentum state for a fixed list of parameter tensors.
class Sgd {
 public:
  explicit Sgd(SgdConfig config) : config_(config) {}

  void step(std::span<Tensor* const> params, std::span<const Tensor> grads);
  void reset() { velocity_.clear(); }
  const SgdConfig& config() const { return config_; }

 private:
  SgdConfig config_;
  std::vector<Tensor> velocity_;
};

}  // namespace plsp
