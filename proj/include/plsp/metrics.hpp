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
#include <string>
#include <string_view>
#include <vector>

#include "plsp/model.hpp"
#include "plsp/pldata.hpp"

namespace plsp {

struct F1Scores {
  double macro = 0.0;
  double micro = 0.0;
};

/// One-vs-rest F1 per class with 0/0 := 0; macro averages all `num_labels` classes,
/// micro uses pooled counts. Throws InvalidArgument on length mismatch or labels >= num_labels.
F1Scores macro_micro_f1(std::span<const Label> predictions, std::span<const Label> truths, std::size_t num_labels);

/// argmax of the logits per instance, ties to the lowest label.
std::vector<Label> predict(const Classifier& model, const PLDataset& data);

/// F1 of the model on a dataset with ground truth; nullopt when the dataset has none.
std::optional<F1Scores> evaluate(const Classifier& model, const PLDataset& data);

/// One line of the metrics stream.
struct MetricsRecord {
  std::string stage;  // "pretrain", "ss", "df", "eval" or "summary"
  std::size_t epoch = 0;
  double loss_df = 0.0;
  double loss_l = 0.0;
  double reg_u = 0.0;
  double loss_cl = 0.0;
  double loss_total = 0.0;
  double gamma = 0.0;
  double lambda = 0.0;
  double macro_f1 = 0.0;  // test set when present, else training set
  double micro_f1 = 0.0;
  double train_macro_f1 = 0.0;
  double train_micro_f1 = 0.0;
  double h_pass_rate = 0.0;
  std::vector<double> tau;
  std::size_t omega_l = 0;
  std::size_t omega_u = 0;
  std::size_t clamped = 0;
  std::size_t skipped = 0;
  double wall_seconds = 0.0;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

/// Single-line JSON object; doubles are written with round-trip precision.
std::string to_json_line(const MetricsRecord& record);
/// Throws ParseError(kMalformed) on invalid JSON or missing fields.
MetricsRecord parse_metrics_line(std::string_view line);

/// Summary record carrying the best-epoch scores of a stream (by micro_f1, first wins).
MetricsRecord summarize(std::span<const MetricsRecord> records);

}  // namespace plsp
