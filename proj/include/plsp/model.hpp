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
#include <filesystem>
#include <span>
#include <vector>

#include "plsp/autodiff.hpp"
#include "plsp/rng.hpp"
#include "plsp/tensor.hpp"

namespace plsp {

struct DenseLayer {
  Tensor weight;  // out × in
  Tensor bias;    // 1 × out

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Parameters of f(x) = W g(x): a ReLU MLP feature extractor g plus a bias-free linear head.
struct ClassifierParams {
  std::vector<DenseLayer> extractor;
  Tensor head;  // l × d_f, row j is w_j

  friend bool operator==(const ClassifierParams&, const ClassifierParams&) = default;
};

/// Parameters bound onto a Graph for one differentiable evaluation.
struct BoundParams {
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;
  ad::Var head;
};

class Classifier {
 public:
  Classifier() = default;
  explicit Classifier(ClassifierParams params);

  /// He-initialised MLP: input -> hidden[0] -> ... -> hidden.back() (= d_f) -> l. Biases start at zero.
  static Classifier init(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t num_labels, Rng& rng);

  std::size_t input_dim() const;
  std::size_t feature_dim() const { return params_.head.cols(); }
  std::size_t num_labels() const { return params_.head.rows(); }

  /// a = g(x) for a batch x[B × input_dim].
  Tensor features(const Tensor& x) const;
  /// z = a Wᵀ for a batch of features.
  Tensor logits_from_features(const Tensor& a) const;
  Tensor logits(const Tensor& x) const { return logits_from_features(features(x)); }

  BoundParams bind(ad::Graph& g) const;
  ad::Var features(const BoundParams& bound, ad::Var x) const;
  static ad::Var logits_from_features(const BoundParams& bound, ad::Var a);

  /// Parameter tensors and matching gradients, in a fixed order (w0, b0, w1, b1, ..., head).
  std::vector<Tensor*> tensors();
  std::vector<Tensor> gradients(const BoundParams& bound, ad::Gradients& grads) const;

  const ClassifierParams& params() const { return params_; }
  ClassifierParams& params() { return params_; }

 private:
  ClassifierParams params_;
};

/// Immutable snapshot Θ̂ of a classifier. Only plain forward passes are exposed, so
/// nothing computed from it can carry a gradient back to the live parameters.
class FrozenClassifier {
 public:
  explicit FrozenClassifier(const Classifier& live) : copy_(live) {}

  Tensor features(const Tensor& x) const { return copy_.features(x); }
  Tensor logits_from_features(const Tensor& a) const { return copy_.logits_from_features(a); }
  Tensor logits(const Tensor& x) const { return copy_.logits(x); }
  const Tensor& head() const { return copy_.params().head; }
  std::size_t num_labels() const { return copy_.num_labels(); }

 private:
  Classifier copy_;
};

inline FrozenClassifier snapshot_frozen(const Classifier& live) { return FrozenClassifier(live); }

/// Single-instance feature vector.
std::vector<double> extract_features(const Classifier& model, std::span<const double> x);

/// Batch of dataset rows as a double tensor.
Tensor rows_to_tensor(std::span<const float> features, std::size_t dim, std::span<const std::size_t> rows);

std::vector<std::uint8_t> encode_checkpoint(const Classifier& model);
Classifier decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const std::filesystem::path& path, const Classifier& model);
Classifier read_checkpoint(const std::filesystem::path& path);

}  // namespace plsp
