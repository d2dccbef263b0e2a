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

#include "plsp/model.hpp"

#include <cmath>
#include <string>

#include "binio.hpp"
#include "plsp/errors.hpp"
#include "plsp/kernels.hpp"

namespace plsp {

Classifier::Classifier(ClassifierParams params) : params_(std::move(params)) {
  std::size_t in = params_.extractor.empty() ? params_.head.cols() : params_.extractor.front().weight.cols();
  for (const auto& layer : params_.extractor) {
    if (layer.weight.cols() != in || layer.bias.rows() != 1 || layer.bias.cols() != layer.weight.rows()) {
      throw ShapeError("inconsistent extractor layer shapes");
    }
    in = layer.weight.rows();
  }
  if (params_.head.cols() != in) throw ShapeError("head width does not match feature dimension");
}

Classifier Classifier::init(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t num_labels,
                            Rng& rng) {
  ClassifierParams p;
  std::size_t in = input_dim;
  for (std::size_t out : hidden) {
    DenseLayer layer{Tensor(out, in), Tensor(1, out)};
    const double stdev = std::sqrt(2.0 / static_cast<double>(in));
    for (double& v : layer.weight.data()) v = stdev * standard_normal(rng);
    p.extractor.push_back(std::move(layer));
    in = out;
  }
  p.head = Tensor(num_labels, in);
  const double stdev = std::sqrt(2.0 / static_cast<double>(in));
  for (double& v : p.head.data()) v = stdev * standard_normal(rng);
  return Classifier(std::move(p));
}

std::size_t Classifier::input_dim() const {
  return params_.extractor.empty() ? params_.head.cols() : params_.extractor.front().weight.cols();
}

Tensor Classifier::features(const Tensor& x) const {
  if (x.cols() != input_dim()) {
    throw ShapeError("input width " + std::to_string(x.cols()) + " != " + std::to_string(input_dim()));
  }
  Tensor h = x;
  for (const auto& layer : params_.extractor) {
    const std::size_t out = layer.weight.rows();
    Tensor next(h.rows(), out);
    kernels::gemm_nt(h.data(), layer.weight.data(), next.data(), h.rows(), h.cols(), out);
    for (std::size_t i = 0; i < next.rows(); ++i) {
      auto r = next.row(i);
      for (std::size_t j = 0; j < out; ++j) {
        const double v = r[j] + layer.bias(0, j);
        r[j] = v > 0.0 ? v : 0.0;
      }
    }
    h = std::move(next);
  }
  return h;
}

Tensor Classifier::logits_from_features(const Tensor& a) const {
  if (a.cols() != feature_dim()) throw ShapeError("feature width does not match head");
  Tensor z(a.rows(), num_labels());
  kernels::gemm_nt(a.data(), params_.head.data(), z.data(), a.rows(), a.cols(), num_labels());
  return z;
}

BoundParams Classifier::bind(ad::Graph& g) const {
  BoundParams b;
  for (const auto& layer : params_.extractor) {
    b.weights.push_back(g.parameter(layer.weight));
    b.biases.push_back(g.parameter(layer.bias));
  }
  b.head = g.parameter(params_.head);
  return b;
}

ad::Var Classifier::features(const BoundParams& bound, ad::Var x) const {
  if (x.cols() != input_dim()) throw ShapeError("input width does not match extractor");
  ad::Var h = x;
  for (std::size_t k = 0; k < bound.weights.size(); ++k) {
    h = ad::relu(ad::add_row_broadcast(ad::matmul_nt(h, bound.weights[k]), bound.biases[k]));
  }
  return h;
}

ad::Var Classifier::logits_from_features(const BoundParams& bound, ad::Var a) { return ad::matmul_nt(a, bound.head); }

std::vector<Tensor*> Classifier::tensors() {
  std::vector<Tensor*> out;
  for (auto& layer : params_.extractor) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  out.push_back(&params_.head);
  return out;
}

std::vector<Tensor> Classifier::gradients(const BoundParams& bound, ad::Gradients& grads) const {
  std::vector<Tensor> out;
  for (std::size_t k = 0; k < bound.weights.size(); ++k) {
    out.push_back(grads.take(bound.weights[k]));
    out.push_back(grads.take(bound.biases[k]));
  }
  out.push_back(grads.take(bound.head));
  return out;
}

std::vector<double> extract_features(const Classifier& model, std::span<const double> x) {
  Tensor a = model.features(Tensor::row_vector(x));
  return {a.data().begin(), a.data().end()};
}

Tensor rows_to_tensor(std::span<const float> features, std::size_t dim, std::span<const std::size_t> rows) {
  Tensor t(rows.size(), dim);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const float* src = features.data() + rows[r] * dim;
    for (std::size_t k = 0; k < dim; ++k) t(r, k) = src[k];
  }
  return t;
}

namespace {
constexpr std::string_view kCheckpointMagic = "PLSW";
constexpr std::uint16_t kCheckpointVersion = 1;

void put_tensor(detail::ByteWriter& w, const Tensor& t) {
  w.put<std::uint32_t>(2);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rows()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(t.cols()));
  for (double v : t.data()) w.put<double>(v);
}

Tensor get_tensor(detail::ByteReader& r) {
  const auto rank = r.get<std::uint32_t>("tensor rank");
  if (rank != 2) throw ParseError(ParseErrorKind::kMalformed, "checkpoint tensors must be rank 2");
  const auto rows = r.get<std::uint32_t>("tensor rows");
  const auto cols = r.get<std::uint32_t>("tensor cols");
  r.need(std::size_t{8} * rows * cols, "tensor data");
  Tensor t(rows, cols);
  for (double& v : t.data()) v = r.get<double>("tensor data");
  return t;
}
}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Classifier& model) {
  detail::ByteWriter w;
  w.magic(kCheckpointMagic);
  w.put<std::uint16_t>(kCheckpointVersion);
  w.put<std::uint16_t>(0);
  const auto& p = model.params();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(2 * p.extractor.size() + 1));
  for (const auto& layer : p.extractor) {
    put_tensor(w, layer.weight);
    put_tensor(w, layer.bias);
  }
  put_tensor(w, p.head);
  return w.take();
}

Classifier decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect_magic(kCheckpointMagic);
  const auto version = r.get<std::uint16_t>("version");
  if (version != kCheckpointVersion) {
    throw ParseError(ParseErrorKind::kVersionMismatch, "checkpoint version " + std::to_string(version));
  }
  if (r.get<std::uint16_t>("flags") != 0) throw ParseError(ParseErrorKind::kMalformed, "unknown checkpoint flags");
  const auto count = r.get<std::uint32_t>("tensor count");
  if (count % 2 != 1) throw ParseError(ParseErrorKind::kMalformed, "checkpoint tensor count must be odd");
  ClassifierParams p;
  for (std::uint32_t k = 0; k + 1 < count; k += 2) {
    DenseLayer layer;
    layer.weight = get_tensor(r);
    layer.bias = get_tensor(r);
    p.extractor.push_back(std::move(layer));
  }
  p.head = get_tensor(r);
  if (r.remaining() != 0) throw ParseError(ParseErrorKind::kMalformed, "trailing bytes after checkpoint");
  try {
    return Classifier(std::move(p));
  } catch (const ShapeError& e) {
    throw ParseError(ParseErrorKind::kInvariantViolation, e.what());
  }
}

void write_checkpoint(const std::filesystem::path& path, const Classifier& model) {
  detail::write_file(path, encode_checkpoint(model));
}

Classifier read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(detail::read_file(path)); }

}  // namespace plsp
