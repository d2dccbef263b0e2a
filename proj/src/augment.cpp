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

#include "plsp/augment.hpp"

#include <algorithm>

#include "plsp/errors.hpp"

namespace plsp {

std::size_t AugmentSpec::effective_cutout(const FeatureShape& shape) const {
  if (!shape.is_image() || kind != AugmentKind::kStrong) return 0;
  if (cutout_size) return *cutout_size;
  return std::min(shape.dims[0], shape.dims[1]) / 4;
}

void AugmentSpec::validate(const FeatureShape& shape) const {
  auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!in_unit(flip_prob) || !in_unit(vector_mask_prob)) throw InvalidArgument("augment probabilities must lie in [0, 1]");
  if (!(vector_jitter_sigma >= 0.0)) throw InvalidArgument("augment jitter sigma must be >= 0");
  if (shape.is_image() && effective_cutout(shape) > std::min(shape.dims[0], shape.dims[1])) {
    throw InvalidArgument("cutout size exceeds the image grid");
  }
}

namespace {

void flip_and_shift(std::vector<float>& img, const FeatureShape& shape, const AugmentSpec& spec, Rng& rng) {
  const std::size_t h = shape.dims[0], w = shape.dims[1], ch = shape.dims[2];
  if (uniform01(rng) < spec.flip_prob) {
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w / 2; ++c) {
        for (std::size_t k = 0; k < ch; ++k) std::swap(img[(r * w + c) * ch + k], img[(r * w + (w - 1 - c)) * ch + k]);
      }
    }
  }
  if (spec.pad == 0) return;
  // Crop offset into the padded grid; (pad, pad) reproduces the input.
  const auto dy = static_cast<std::ptrdiff_t>(uniform_index(rng, 2 * spec.pad + 1)) - static_cast<std::ptrdiff_t>(spec.pad);
  const auto dx = static_cast<std::ptrdiff_t>(uniform_index(rng, 2 * spec.pad + 1)) - static_cast<std::ptrdiff_t>(spec.pad);
  std::vector<float> out(img.size(), 0.0f);
  for (std::size_t r = 0; r < h; ++r) {
    const auto sr = static_cast<std::ptrdiff_t>(r) + dy;
    if (sr < 0 || sr >= static_cast<std::ptrdiff_t>(h)) continue;
    for (std::size_t c = 0; c < w; ++c) {
      const auto sc = static_cast<std::ptrdiff_t>(c) + dx;
      if (sc < 0 || sc >= static_cast<std::ptrdiff_t>(w)) continue;
      for (std::size_t k = 0; k < ch; ++k) {
        out[(r * w + c) * ch + k] = img[(static_cast<std::size_t>(sr) * w + static_cast<std::size_t>(sc)) * ch + k];
      }
    }
  }
  img = std::move(out);
}

void cutout(std::vector<float>& img, const FeatureShape& shape, std::size_t side, Rng& rng) {
  if (side == 0) return;
  const std::size_t h = shape.dims[0], w = shape.dims[1], ch = shape.dims[2];
  const std::size_t y0 = uniform_index(rng, h - side + 1);
  const std::size_t x0 = uniform_index(rng, w - side + 1);
  for (std::size_t r = y0; r < y0 + side; ++r) {
    for (std::size_t c = x0; c < x0 + side; ++c) {
      for (std::size_t k = 0; k < ch; ++k) img[(r * w + c) * ch + k] = 0.0f;
    }
  }
}

void jitter(std::vector<float>& x, double sigma, Rng& rng) {
  if (sigma == 0.0) return;
  for (float& v : x) v = static_cast<float>(v + sigma * standard_normal(rng));
}

void mask_features(std::vector<float>& x, double prob, Rng& rng) {
  if (prob == 0.0) return;
  for (float& v : x) {
    if (uniform01(rng) < prob) v = 0.0f;
  }
}

}  // namespace

std::vector<float> weak(std::span<const float> x, const FeatureShape& shape, const AugmentSpec& spec, Rng& rng) {
  std::vector<float> out(x.begin(), x.end());
  if (shape.is_image()) {
    flip_and_shift(out, shape, spec, rng);
  } else {
    jitter(out, spec.vector_jitter_sigma, rng);
  }
  return out;
}

std::vector<float> strong(std::span<const float> x, const FeatureShape& shape, const AugmentSpec& spec, Rng& rng) {
  std::vector<float> out = weak(x, shape, spec, rng);
  if (shape.is_image()) {
    cutout(out, shape, spec.effective_cutout(shape), rng);
  } else {
    mask_features(out, spec.vector_mask_prob, rng);
  }
  return out;
}

std::vector<float> augment(std::span<const float> x, const FeatureShape& shape, const AugmentSpec& spec, Rng& rng) {
  return spec.kind == AugmentKind::kStrong ? strong(x, shape, spec, rng) : weak(x, shape, spec, rng);
}

}  // namespace plsp
