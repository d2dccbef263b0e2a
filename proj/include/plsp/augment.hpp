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

#include "plsp/pldata.hpp"
#include "plsp/rng.hpp"

namespace plsp {

enum class AugmentKind { kWeak, kStrong };

/// Parameters of the weak α(·) and strong 𝒜(·) input perturbations.
///
/// Image grids (H×W×Ch, channel-last): horizontal flip, zero-pad and random crop,
/// and for the strong pipeline one zeroed cutout square. Flat vectors: Gaussian
/// jitter, and for the strong pipeline Bernoulli feature masking.
struct AugmentSpec {
  AugmentKind kind = AugmentKind::kWeak;
  double flip_prob = 0.5;
  std::size_t pad = 4;
  /// Side of the cutout square; unset selects a quarter of min(H, W), 0 disables it.
  std::optional<std::size_t> cutout_size;
  double vector_jitter_sigma = 0.05;
  double vector_mask_prob = 0.0;

  static AugmentSpec weak_defaults() { return {}; }
  static AugmentSpec strong_defaults() { return {AugmentKind::kStrong, 0.5, 4, std::nullopt, 0.15, 0.2}; }

  /// Cutout side actually used for a given grid.
  std::size_t effective_cutout(const FeatureShape& shape) const;
  void validate(const FeatureShape& shape) const;
};

std::vector<float> weak(std::span<const float> x, const FeatureShape& shape, const AugmentSpec& spec, Rng& rng);
std::vector<float> strong(std::span<const float> x, const FeatureShape& shape, const AugmentSpec& spec, Rng& rng);

/// Dispatches on spec.kind.
std::vector<float> augment(std::span<const float> x, const FeatureShape& shape, const AugmentSpec& spec, Rng& rng);

}  // namespace plsp
