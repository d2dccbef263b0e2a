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

#include "plsp/metrics.hpp"

#include <numeric>
#include <string>

#include <json.hpp>

#include "plsp/errors.hpp"

namespace plsp {

F1Scores macro_micro_f1(std::span<const Label> predictions, std::span<const Label> truths, std::size_t num_labels) {
  if (predictions.size() != truths.size()) throw InvalidArgument("macro_micro_f1: length mismatch");
  std::vector<std::size_t> tp(num_labels, 0), fp(num_labels, 0), fn(num_labels, 0);
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (predictions[i] >= num_labels || truths[i] >= num_labels) throw InvalidArgument("macro_micro_f1: label out of range");
    if (predictions[i] == truths[i]) {
      ++tp[truths[i]];
    } else {
      ++fp[predictions[i]];
      ++fn[truths[i]];
    }
  }
  auto f1 = [](std::size_t t, std::size_t p, std::size_t n) {
    const std::size_t denom = 2 * t + p + n;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(t) / static_cast<double>(denom);
  };
  F1Scores s;
  if (num_labels == 0) return s;
  for (std::size_t j = 0; j < num_labels; ++j) s.macro += f1(tp[j], fp[j], fn[j]);
  s.macro /= static_cast<double>(num_labels);
  const auto sum = [](const std::vector<std::size_t>& v) { return std::accumulate(v.begin(), v.end(), std::size_t{0}); };
  s.micro = f1(sum(tp), sum(fp), sum(fn));
  return s;
}

std::vector<Label> predict(const Classifier& model, const PLDataset& data) {
  std::vector<std::size_t> rows(data.n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const Tensor logits = model.logits(rows_to_tensor(data.features, data.dim(), rows));
  std::vector<Label> out(data.n);
  for (std::size_t i = 0; i < data.n; ++i) {
    Label best = 0;
    for (Label j = 1; j < logits.cols(); ++j) {
      if (logits(i, j) > logits(i, best)) best = j;
    }
    out[i] = best;
  }
  return out;
}

std::optional<F1Scores> evaluate(const Classifier& model, const PLDataset& data) {
  if (!data.truth) return std::nullopt;
  return macro_micro_f1(predict(model, data), *data.truth, data.num_labels);
}

std::string to_json_line(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["stage"] = r.stage;
  j["epoch"] = r.epoch;
  j["loss_df"] = r.loss_df;
  j["loss_l"] = r.loss_l;
  j["reg_u"] = r.reg_u;
  j["loss_cl"] = r.loss_cl;
  j["loss_total"] = r.loss_total;
  j["gamma"] = r.gamma;
  j["lambda"] = r.lambda;
  j["macro_f1"] = r.macro_f1;
  j["micro_f1"] = r.micro_f1;
  j["train_macro_f1"] = r.train_macro_f1;
  j["train_micro_f1"] = r.train_micro_f1;
  j["h_pass_rate"] = r.h_pass_rate;
  j["tau"] = r.tau;
  j["omega_l"] = r.omega_l;
  j["omega_u"] = r.omega_u;
  j["clamped"] = r.clamped;
  j["skipped"] = r.skipped;
  j["wall_seconds"] = r.wall_seconds;
  return j.dump();
}

MetricsRecord parse_metrics_line(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    MetricsRecord r;
    j.at("stage").get_to(r.stage);
    j.at("epoch").get_to(r.epoch);
    j.at("loss_df").get_to(r.loss_df);
    j.at("loss_l").get_to(r.loss_l);
    j.at("reg_u").get_to(r.reg_u);
    j.at("loss_cl").get_to(r.loss_cl);
    j.at("loss_total").get_to(r.loss_total);
    j.at("gamma").get_to(r.gamma);
    j.at("lambda").get_to(r.lambda);
    j.at("macro_f1").get_to(r.macro_f1);
    j.at("micro_f1").get_to(r.micro_f1);
    j.at("train_macro_f1").get_to(r.train_macro_f1);
    j.at("train_micro_f1").get_to(r.train_micro_f1);
    j.at("h_pass_rate").get_to(r.h_pass_rate);
    j.at("tau").get_to(r.tau);
    j.at("omega_l").get_to(r.omega_l);
    j.at("omega_u").get_to(r.omega_u);
    j.at("clamped").get_to(r.clamped);
    j.at("skipped").get_to(r.skipped);
    j.at("wall_seconds").get_to(r.wall_seconds);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(ParseErrorKind::kMalformed, std::string("metrics line: ") + e.what());
  }
}

MetricsRecord summarize(std::span<const MetricsRecord> records) {
  MetricsRecord best;
  bool found = false;
  for (const auto& r : records) {
    if (r.stage == "summary") continue;
    if (!found || r.micro_f1 > best.micro_f1) {
      best = r;
      found = true;
    }
  }
  best.stage = "summary";
  return best;
}

}  // namespace plsp
