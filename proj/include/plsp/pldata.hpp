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
#include <optional>
#include <span>
#include <vector>

#include "plsp/rng.hpp"

namespace plsp {

using Label = std::uint32_t;

/// Candidate label set C_i as a bitmask over l labels (bit j set iff j is a candidate).
class LabelMask {
 public:
  LabelMask() = default;
  explicit LabelMask(std::size_t num_labels) : num_labels_(num_labels), words_(word_count(num_labels), 0) {}

  static std::size_t word_count(std::size_t num_labels) { return (num_labels + 63) / 64; }
  static LabelMask full(std::size_t num_labels);
  static LabelMask single(std::size_t num_labels, Label label);
  static LabelMask from_labels(std::size_t num_labels, std::initializer_list<Label> labels);

  std::size_t num_labels() const { return num_labels_; }
  bool contains(Label j) const { return (words_[j / 64] >> (j % 64)) & 1U; }
  void set(Label j) { words_[j / 64] |= std::uint64_t{1} << (j % 64); }
  void reset(Label j) { words_[j / 64] &= ~(std::uint64_t{1} << (j % 64)); }
  std::size_t count() const;
  bool is_full() const { return count() == num_labels_; }
  bool empty() const { return count() == 0; }
  std::vector<Label> labels() const;

  std::span<const std::uint64_t> words() const { return words_; }
  std::span<std::uint64_t> words() { return words_; }

  friend bool operator==(const LabelMask&, const LabelMask&) = default;

 private:
  std::size_t num_labels_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Feature layout of one instance: flat vector {d} or image grid {H, W, Ch}.
struct FeatureShape {
  std::vector<std::uint32_t> dims;

  static FeatureShape flat(std::uint32_t d) { return {{d}}; }
  static FeatureShape image(std::uint32_t h, std::uint32_t w, std::uint32_t ch) { return {{h, w, ch}}; }

  bool is_image() const { return dims.size() == 3; }
  std::size_t size() const;

  friend bool operator==(const FeatureShape&, const FeatureShape&) = default;
};

/// Partially labeled dataset: features, candidate sets, and optional held-out truth.
///
/// Invariants (checked by validate()): every candidate set is non-empty and not the
/// full label set, no mask bit at position >= l is set, and truth_i lies in C_i.
struct PLDataset {
  std::size_t n = 0;
  std::size_t num_labels = 0;
  FeatureShape shape;
  std::vector<float> features;  // n * shape.size(), row-major
  std::vector<LabelMask> candidates;
  std::optional<std::vector<Label>> truth;

  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(features).subspan(i * shape.size(), shape.size());
  }
  std::size_t dim() const { return shape.size(); }

  /// Throws InvalidArgument naming the first broken invariant.
  void validate() const;

  friend bool operator==(const PLDataset&, const PLDataset&) = default;
};

enum class Strategy { kUss, kFps };

struct GenSpec {
  Strategy strategy = Strategy::kUss;
  double q = 0.0;  // FPS flip probability, ignored by USS
  std::uint64_t seed = 0;
};

/// Uniform sampling over candidate sets containing the truth, excluding the full set.
std::vector<LabelMask> generate_uss(std::span<const Label> truth, std::size_t num_labels, Rng& rng);

/// Independent flips of every irrelevant label with probability q, with a forced
/// single flip when none fire and rejection of the full set.
std::vector<LabelMask> generate_fps(std::span<const Label> truth, std::size_t num_labels, double q, Rng& rng);

std::vector<LabelMask> generate_candidates(std::span<const Label> truth, std::size_t num_labels,
                                           const GenSpec& spec);

/// l unit-variance Gaussian clusters with pairwise center distance >= separation.
/// Class of instance i is i mod l. Features are z-scored per dimension. Candidates are
/// left empty; fill them with generate_candidates().
PLDataset make_blobs(std::size_t n, std::size_t num_labels, std::size_t dim, double separation, Rng& rng);

/// Train and held-out sets drawn around the same centers; both are z-scored with the
/// training statistics.
std::pair<PLDataset, PLDataset> make_blobs_with_holdout(std::size_t n_train, std::size_t n_test,
                                                        std::size_t num_labels, std::size_t dim,
                                                        double separation, Rng& rng);

std::vector<std::uint8_t> encode_dataset(const PLDataset& data);
PLDataset decode_dataset(std::span<const std::uint8_t> bytes);

void write_dataset(const std::filesystem::path& path, const PLDataset& data);
PLDataset read_dataset(const std::filesystem::path& path);

}  // namespace plsp
