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

#include "plsp/sgd.hpp"

#include <string>

#include "plsp/errors.hpp"

namespace plsp {

void SgdConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw InvalidArgument("weight decay must be >= 0");
}

void sgd_step(Tensor& param, const Tensor& grad, const SgdConfig& config, Tensor& velocity) {
  if (!param.same_shape(grad)) throw ShapeError("sgd_step: parameter and gradient shapes differ");
  if (velocity.size() == 0) velocity = Tensor(param.rows(), param.cols());
  if (!velocity.same_shape(param)) throw ShapeError("sgd_step: momentum buffer shape differs");
  auto p = param.data();
  auto g = grad.data();
  auto v = velocity.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    v[i] = config.momentum * v[i] + g[i] + config.weight_decay * p[i];
    p[i] -= config.learning_rate * v[i];
  }
}

void Sgd::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) throw ShapeError("Sgd::step: parameter and gradient counts differ");
  if (velocity_.empty()) velocity_.resize(params.size());
  if (velocity_.size() != params.size()) throw ShapeError("Sgd::step: parameter list changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) sgd_step(*params[i], grads[i], config_, velocity_[i]);
}

}  // namespace plsp
