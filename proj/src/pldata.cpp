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

#include "plsp/pldata.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "binio.hpp"
#include "plsp/errors.hpp"

namespace plsp {

const char* to_string(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::kBadMagic:
      return "bad magic";
    case ParseErrorKind::kVersionMismatch:
      return "version mismatch";
    case ParseErrorKind::kTruncated:
      return "truncated payload";
    case ParseErrorKind::kInvariantViolation:
      return "invariant violation";
    case ParseErrorKind::kMalformed:
      return "malformed";
  }
  return "unknown";
}

LabelMask LabelMask::full(std::size_t num_labels) {
  LabelMask m(num_labels);
  for (Label j = 0; j < num_labels; ++j) m.set(j);
  return m;
}

LabelMask LabelMask::single(std::size_t num_labels, Label label) {
  LabelMask m(num_labels);
  m.set(label);
  return m;
}

LabelMask LabelMask::from_labels(std::size_t num_labels, std::initializer_list<Label> labels) {
  LabelMask m(num_labels);
  for (Label j : labels) m.set(j);
  return m;
}

std::size_t LabelMask::count() const {
  std::size_t c = 0;
  for (std::uint64_t w : words_) c += static_cast<std::size_t>(std::popcount(w));
  return c;
}

std::vector<Label> LabelMask::labels() const {
  std::vector<Label> out;
  for (Label j = 0; j < num_labels_; ++j) {
    if (contains(j)) out.push_back(j);
  }
  return out;
}

std::size_t FeatureShape::size() const {
  std::size_t s = 1;
  for (auto d : dims) s *= d;
  return s;
}

void PLDataset::validate() const {
  if (num_labels < 3) throw InvalidArgument("dataset needs at least 3 labels, got " + std::to_string(num_labels));
  if (shape.dims.empty() || shape.size() == 0) throw InvalidArgument("empty feature shape");
  if (features.size() != n * shape.size()) throw InvalidArgument("feature buffer does not match n * shape");
  if (candidates.size() != n) throw InvalidArgument("candidate count does not match n");
  if (truth && truth->size() != n) throw InvalidArgument("truth count does not match n");
  const std::size_t words = LabelMask::word_count(num_labels);
  for (std::size_t i = 0; i < n; ++i) {
    const LabelMask& c = candidates[i];
    if (c.num_labels() != num_labels || c.words().size() != words) {
      throw InvalidArgument("candidate mask " + std::to_string(i) + " has wrong width");
    }
    if (num_labels % 64 != 0) {
      const std::uint64_t high = c.words().back() >> (num_labels % 64);
      if (high != 0) throw InvalidArgument("candidate mask " + std::to_string(i) + " has bits beyond l");
    }
    const std::size_t size = c.count();
    if (size == 0) throw InvalidArgument("candidate set " + std::to_string(i) + " is empty");
    if (size == num_labels) throw InvalidArgument("candidate set " + std::to_string(i) + " is the full label set");
    if (truth) {
      const Label y = (*truth)[i];
      if (y >= num_labels || !c.contains(y)) {
        throw InvalidArgument("truth of instance " + std::to_string(i) + " is not a candidate");
      }
    }
  }
}

namespace {

void check_labels(std::span<const Label> truth, std::size_t num_labels) {
  if (num_labels < 3) {
    throw InvalidArgument("candidate generation needs l >= 3, got " + std::to_string(num_labels));
  }
  for (Label y : truth) {
    if (y >= num_labels) throw InvalidArgument("label " + std::to_string(y) + " out of range");
  }
}

}  // namespace

std::vector<LabelMask> generate_uss(std::span<const Label> truth, std::size_t num_labels, Rng& rng) {
  check_labels(truth, num_labels);
  std::vector<LabelMask> out;
  out.reserve(truth.size());
  for (Label y : truth) {
    LabelMask c(num_labels);
    do {
      c = LabelMask::single(num_labels, y);
      for (Label j = 0; j < num_labels; ++j) {
        if (j != y && (rng() >> 63) != 0) c.set(j);
      }
    } while (c.is_full());
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<LabelMask> generate_fps(std::span<const Label> truth, std::size_t num_labels, double q, Rng& rng) {
  check_labels(truth, num_labels);
  if (!(q >= 0.0 && q < 1.0)) {
    throw InvalidArgument("flip probability q must lie in [0, 1), got " + std::to_string(q));
  }
  std::vector<LabelMask> out;
  out.reserve(truth.size());
  for (Label y : truth) {
    LabelMask c(num_labels);
    do {
      c = LabelMask::single(num_labels, y);
      bool flipped = false;
      for (Label j = 0; j < num_labels; ++j) {
        if (j != y && uniform01(rng) < q) {
          c.set(j);
          flipped = true;
        }
      }
      if (!flipped) {
        auto r = static_cast<Label>(uniform_index(rng, num_labels - 1));
        if (r >= y) ++r;
        c.set(r);
      }
    } while (c.is_full());
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<LabelMask> generate_candidates(std::span<const Label> truth, std::size_t num_labels,
                                           const GenSpec& spec) {
  Rng rng(spec.seed);
  return spec.strategy == Strategy::kUss ? generate_uss(truth, num_labels, rng)
                                         : generate_fps(truth, num_labels, spec.q, rng);
}

namespace {

std::vector<std::vector<double>> place_centers(std::size_t num_labels, std::size_t dim, double separation,
                                               Rng& rng) {
  double half_width = separation * std::max(1.0, std::pow(static_cast<double>(num_labels), 1.0 / dim));
  for (;;) {
    std::vector<std::vector<double>> centers;
    int attempts = 0;
    while (centers.size() < num_labels && attempts < 1000) {
      ++attempts;
      std::vector<double> c(dim);
      for (double& v : c) v = (2.0 * uniform01(rng) - 1.0) * half_width;
      bool ok = true;
      for (const auto& other : centers) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < dim; ++k) d2 += (c[k] - other[k]) * (c[k] - other[k]);
        if (d2 < separation * separation) {
          ok = false;
          break;
        }
      }
      if (ok) {
        centers.push_back(std::move(c));
        attempts = 0;
      }
    }
    if (centers.size() == num_labels) return centers;
    half_width *= 1.5;
  }
}

void sample_blob_points(PLDataset& data, const std::vector<std::vector<double>>& centers, Rng& rng,
                        std::vector<double>& raw) {
  const std::size_t dim = data.dim();
  raw.assign(data.n * dim, 0.0);
  std::vector<Label> truth(data.n);
  for (std::size_t i = 0; i < data.n; ++i) {
    const auto y = static_cast<Label>(i % data.num_labels);
    truth[i] = y;
    for (std::size_t k = 0; k < dim; ++k) raw[i * dim + k] = centers[y][k] + standard_normal(rng);
  }
  data.truth = std::move(truth);
  data.candidates.assign(data.n, LabelMask(data.num_labels));
}

void zscore_into(PLDataset& data, const std::vector<double>& raw, const std::vector<double>& mean,
                 const std::vector<double>& stdev) {
  const std::size_t dim = data.dim();
  data.features.resize(data.n * dim);
  for (std::size_t i = 0; i < data.n; ++i) {
    for (std::size_t k = 0; k < dim; ++k) {
      data.features[i * dim + k] = static_cast<float>((raw[i * dim + k] - mean[k]) / stdev[k]);
    }
  }
}

void column_moments(const std::vector<double>& raw, std::size_t n, std::size_t dim, std::vector<double>& mean,
                    std::vector<double>& stdev) {
  mean.assign(dim, 0.0);
  stdev.assign(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < dim; ++k) mean[k] += raw[i * dim + k];
  }
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < dim; ++k) {
      const double c = raw[i * dim + k] - mean[k];
      stdev[k] += c * c;
    }
  }
  for (double& s : stdev) {
    s = std::sqrt(s / static_cast<double>(n));
    if (s == 0.0) s = 1.0;
  }
}

void check_blob_args(std::size_t n, std::size_t num_labels, std::size_t dim, double separation) {
  if (num_labels < 1 || n < num_labels) throw InvalidArgument("make_blobs needs n >= l");
  if (dim < 2) throw InvalidArgument("make_blobs needs d >= 2");
  if (!(separation > 0.0)) throw InvalidArgument("make_blobs needs separation > 0");
}

}  // namespace

PLDataset make_blobs(std::size_t n, std::size_t num_labels, std::size_t dim, double separation, Rng& rng) {
  return make_blobs_with_holdout(n, 0, num_labels, dim, separation, rng).first;
}

std::pair<PLDataset, PLDataset> make_blobs_with_holdout(std::size_t n_train, std::size_t n_test,
                                                        std::size_t num_labels, std::size_t dim,
                                                        double separation, Rng& rng) {
  check_blob_args(n_train, num_labels, dim, separation);
  const auto centers = place_centers(num_labels, dim, separation, rng);

  PLDataset train;
  train.n = n_train;
  train.num_labels = num_labels;
  train.shape = FeatureShape::flat(static_cast<std::uint32_t>(dim));
  PLDataset test = train;
  test.n = n_test;

  std::vector<double> raw_train, raw_test, mean, stdev;
  sample_blob_points(train, centers, rng, raw_train);
  sample_blob_points(test, centers, rng, raw_test);
  column_moments(raw_train, n_train, dim, mean, stdev);
  zscore_into(train, raw_train, mean, stdev);
  zscore_into(test, raw_test, mean, stdev);
  return {std::move(train), std::move(test)};
}

namespace {
constexpr std::string_view kDatasetMagic = "PLSP";
constexpr std::uint16_t kFormatVersion = 1;
constexpr std::uint16_t kFlagTruth = 1;
}  // namespace

std::vector<std::uint8_t> encode_dataset(const PLDataset& data) {
  data.validate();
  detail::ByteWriter w;
  w.magic(kDatasetMagic);
  w.put<std::uint16_t>(kFormatVersion);
  w.put<std::uint16_t>(data.truth ? kFlagTruth : 0);
  w.put<std::uint64_t>(data.n);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(data.num_labels));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(data.shape.dims.size()));
  for (auto d : data.shape.dims) w.put<std::uint32_t>(d);
  for (float f : data.features) w.put<float>(f);
  for (const auto& c : data.candidates) {
    for (std::uint64_t word : c.words()) w.put<std::uint64_t>(word);
  }
  if (data.truth) {
    for (Label y : *data.truth) w.put<std::uint32_t>(y);
  }
  return w.take();
}

PLDataset decode_dataset(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect_magic(kDatasetMagic);
  const auto version = r.get<std::uint16_t>("version");
  if (version != kFormatVersion) {
    throw ParseError(ParseErrorKind::kVersionMismatch, "file version " + std::to_string(version));
  }
  const auto flags = r.get<std::uint16_t>("flags");
  if ((flags & ~kFlagTruth) != 0) throw ParseError(ParseErrorKind::kMalformed, "unknown flag bits");

  PLDataset data;
  data.n = r.get<std::uint64_t>("n");
  data.num_labels = r.get<std::uint32_t>("l");
  const auto rank = r.get<std::uint32_t>("rank");
  if (rank != 1 && rank != 3) throw ParseError(ParseErrorKind::kMalformed, "shape rank must be 1 or 3");
  for (std::uint32_t k = 0; k < rank; ++k) data.shape.dims.push_back(r.get<std::uint32_t>("dims"));
  if (data.num_labels == 0 || data.shape.size() == 0) {
    throw ParseError(ParseErrorKind::kInvariantViolation, "zero label count or feature size");
  }

  const std::size_t words = LabelMask::word_count(data.num_labels);
  // Division form keeps the size check itself from overflowing.
  if (data.n > r.remaining() / (4 * data.shape.size() + 8 * words)) {
    throw ParseError(ParseErrorKind::kTruncated, "payload shorter than header implies");
  }
  data.features.resize(data.n * data.shape.size());
  for (float& f : data.features) f = r.get<float>("features");
  data.candidates.reserve(data.n);
  for (std::size_t i = 0; i < data.n; ++i) {
    LabelMask c(data.num_labels);
    for (auto& word : c.words()) word = r.get<std::uint64_t>("candidate masks");
    data.candidates.push_back(std::move(c));
  }
  if ((flags & kFlagTruth) != 0) {
    r.need(4 * data.n, "truth labels");
    std::vector<Label> truth(data.n);
    for (Label& y : truth) y = r.get<std::uint32_t>("truth labels");
    data.truth = std::move(truth);
  }
  if (r.remaining() != 0) throw ParseError(ParseErrorKind::kMalformed, "trailing bytes after payload");
  try {
    data.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(ParseErrorKind::kInvariantViolation, e.what());
  }
  return data;
}

void write_dataset(const std::filesystem::path& path, const PLDataset& data) {
  detail::write_file(path, encode_dataset(data));
}

PLDataset read_dataset(const std::filesystem::path& path) { return decode_dataset(detail::read_file(path)); }

}  // namespace plsp
