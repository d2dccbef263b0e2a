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

// Command-line front end: dataset generation, training, evaluation and checks.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "plsp/config.hpp"
#include "plsp/errors.hpp"
#include "plsp/kernels.hpp"
#include "plsp/metrics.hpp"
#include "plsp/trainer.hpp"
#include "plsp/verify.hpp"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitParam = 4;

void print_error(const std::string& kind, const std::string& message, int code) {
  nlohmann::ordered_json j;
  j["error"] = kind;
  j["message"] = message;
  j["exit_code"] = code;
  std::cerr << j.dump() << '\n';
}

/// Writes metrics lines to a file or stdout.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc);
      if (!*file_) throw plsp::IoError("cannot open metrics file " + path);
    }
  }
  void write(const std::string& line) {
    std::ostream& out = file_ ? *file_ : std::cout;
    out << line << '\n';
    out.flush();
    if (!out) throw plsp::IoError("failed writing metrics");
  }
  void write(const plsp::MetricsRecord& r) { write(plsp::to_json_line(r)); }

 private:
  std::unique_ptr<std::ofstream> file_;
};

struct TrainFlags {
  std::string data, test, config, out, metrics, init;
  bool deterministic = false, nondeterministic = false, beta_pi2_8 = false;
  std::vector<std::pair<std::string, CLI::Option*>> overrides;
  std::vector<std::unique_ptr<std::string>> storage;
};

void add_train_flags(CLI::App* sub, TrainFlags& f, bool wants_out) {
  sub->add_option("--data", f.data, "Training dataset file")->required();
  sub->add_option("--test", f.test, "Held-out dataset file");
  sub->add_option("--config", f.config, "key = value config file");
  if (wants_out) sub->add_option("--out", f.out, "Checkpoint output path");
  sub->add_option("--metrics", f.metrics, "Metrics output path (stdout if omitted)");
  sub->add_flag("--deterministic", f.deterministic, "Bitwise-reproducible run (default)");
  sub->add_flag("--no-deterministic", f.nondeterministic, "Record wall-clock time in metrics");
  sub->add_flag("--beta-pi2-8", f.beta_pi2_8, "Use pi^2/8 as probit slope");
  const char* keys[] = {"gamma0", "lambda0", "tau0",      "k",         "pretrain_epochs", "epochs",
                        "iters",  "batch_l", "batch_u",   "lr",        "momentum",        "weight_decay",
                        "beta",   "tau_floor", "seed",    "hidden",    "weak_flip_prob",  "weak_pad",
                        "weak_jitter_sigma", "strong_flip_prob", "strong_pad", "strong_cutout_size",
                        "strong_jitter_sigma", "strong_mask_prob"};
  for (const char* key : keys) {
    std::string flag = std::string("--") + key;
    std::replace(flag.begin() + 2, flag.end(), '_', '-');
    f.storage.push_back(std::make_unique<std::string>());
    f.overrides.emplace_back(key, sub->add_option(flag, *f.storage.back()));
  }
}

plsp::TrainConfig resolve_config(const TrainFlags& f) {
  plsp::TrainConfig c;
  if (!f.config.empty()) plsp::apply_config(c, plsp::read_config(f.config));
  for (std::size_t i = 0; i < f.overrides.size(); ++i) {
    if (f.overrides[i].second->count()) plsp::apply_config_value(c, f.overrides[i].first, *f.storage[i]);
  }
  if (f.beta_pi2_8) c.beta = plsp::kProbitSlopePiSquaredOver8;
  if (f.deterministic) c.deterministic = true;
  if (f.nondeterministic) c.deterministic = false;
  c.validate();
  return c;
}

struct Loaded {
  plsp::PLDataset train;
  std::optional<plsp::PLDataset> test;
  const plsp::PLDataset* test_ptr() const { return test ? &*test : nullptr; }
};

Loaded load(const TrainFlags& f) {
  Loaded d{plsp::read_dataset(f.data), std::nullopt};
  if (!f.test.empty()) d.test = plsp::read_dataset(f.test);
  if (d.test && d.test->num_labels != d.train.num_labels) {
    throw plsp::InvalidArgument("test set label count differs from training set");
  }
  return d;
}

int run_generate(std::size_t n, std::size_t test_n, std::size_t labels, std::size_t dim, double sep,
                 const std::string& strategy, double q, std::uint64_t seed, const std::string& out,
                 const std::string& test_out) {
  plsp::GenSpec spec;
  if (strategy == "uss") {
    spec.strategy = plsp::Strategy::kUss;
  } else if (strategy == "fps") {
    spec.strategy = plsp::Strategy::kFps;
    if (!(q >= 0.0 && q < 1.0)) throw plsp::InvalidArgument("--q must lie in [0, 1) for fps");
  } else {
    throw plsp::InvalidArgument("--strategy must be uss or fps");
  }
  spec.q = q;
  if (test_n > 0 && test_out.empty()) throw plsp::InvalidArgument("--test-out is required when --test-n > 0");
  plsp::Rng rng = plsp::make_substream(seed, {0x626c6f62});
  auto [train, test] = plsp::make_blobs_with_holdout(n, test_n, labels, dim, sep, rng);
  spec.seed = plsp::derive_seed(seed, {0x7472616e});
  train.candidates = plsp::generate_candidates(*train.truth, labels, spec);
  plsp::write_dataset(out, train);
  if (test_n > 0) {
    spec.seed = plsp::derive_seed(seed, {0x74657374});
    test.candidates = plsp::generate_candidates(*test.truth, labels, spec);
    plsp::write_dataset(test_out, test);
  }
  return 0;
}

enum class TrainMode { kPretrain, kFull, kDf };

int run_train(const TrainFlags& f, TrainMode mode) {
  const plsp::TrainConfig c = resolve_config(f);
  const Loaded d = load(f);
  MetricsWriter writer(f.metrics);
  std::vector<plsp::MetricsRecord> final_stage;
  const std::string final_name = mode == TrainMode::kDf ? "df" : (mode == TrainMode::kPretrain || c.epochs == 0 ? "pretrain" : "ss");
  const plsp::MetricsSink sink = [&](const plsp::MetricsRecord& r) {
    writer.write(r);
    if (r.stage == final_name) final_stage.push_back(r);
  };
  plsp::Classifier model;
  switch (mode) {
    case TrainMode::kPretrain:
      model = plsp::pretrain(d.train, plsp::init_model(d.train, c), c, d.test_ptr(), sink);
      break;
    case TrainMode::kFull:
      if (!f.init.empty()) {
        model = plsp::train_ss(d.train, plsp::read_checkpoint(f.init), c, d.test_ptr(), sink);
      } else {
        model = plsp::train_plsp(d.train, c, d.test_ptr(), sink);
      }
      break;
    case TrainMode::kDf:
      model = plsp::train_df_baseline(d.train, c, d.test_ptr(), sink);
      break;
  }
  if (!final_stage.empty()) writer.write(plsp::summarize(final_stage));
  if (!f.out.empty()) plsp::write_checkpoint(f.out, model);
  return 0;
}

int run_eval(const std::string& checkpoint, const std::string& data_path, const std::string& metrics) {
  const plsp::Classifier model = plsp::read_checkpoint(checkpoint);
  const plsp::PLDataset data = plsp::read_dataset(data_path);
  if (model.num_labels() != data.num_labels || model.input_dim() != data.dim()) {
    throw plsp::InvalidArgument("checkpoint does not match dataset shape");
  }
  const auto scores = plsp::evaluate(model, data);
  if (!scores) throw plsp::InvalidArgument("dataset carries no ground truth to evaluate against");
  plsp::MetricsRecord r;
  r.stage = "eval";
  r.macro_f1 = r.train_macro_f1 = scores->macro;
  r.micro_f1 = r.train_micro_f1 = scores->micro;
  MetricsWriter(metrics).write(r);
  return 0;
}

struct VerifyFlags {
  std::uint64_t seed = 0;
  double lambda = 0.05;
  std::size_t instances = 50;
  std::size_t samples = 2000;
  std::size_t weak_samples = 1000000;
  std::size_t labels = 3;
  std::size_t feature_dim = 8;
  bool beta_pi2_8 = false;
};

int run_verify(const VerifyFlags& v) {
  if (v.lambda < 0.0) throw plsp::InvalidArgument("--lambda must be >= 0");
  if (v.instances == 0 || v.samples < 2 || v.weak_samples == 0) throw plsp::InvalidArgument("sample counts must be positive");
  if (v.labels < 2 || v.feature_dim == 0) throw plsp::InvalidArgument("need --labels >= 2 and --feature-dim >= 1");
  const double beta = v.beta_pi2_8 ? plsp::kProbitSlopePiSquaredOver8 : plsp::kDefaultProbitSlope;
  bool all_pass = true;
  auto emit = [](const nlohmann::ordered_json& j) { std::cout << j.dump() << '\n'; };

  const auto bound = plsp::check_bound_direction(v.instances, v.samples, {v.lambda}, v.seed, v.labels, v.feature_dim);
  std::size_t passed = 0;
  for (const auto& c : bound) passed += c.pass;
  const bool bound_ok = passed == bound.size();
  all_pass &= bound_ok;
  emit({{"check", "bound_direction"}, {"status", bound_ok ? "PASS" : "FAIL"}, {"lambda", v.lambda},
        {"passed", passed}, {"instances", bound.size()}, {"samples", v.samples}});

  const std::vector<std::size_t> label_counts = {2, 3, 4};
  const auto l0 = plsp::check_lambda0(20000, label_counts, beta, v.seed);
  double probit_worst = 0.0;
  for (double x : l0.probit_vs_softmax) probit_worst = std::max(probit_worst, x);
  const bool l0_ok = l0.shifted_vs_log_softmax < 1e-12 && probit_worst <= 0.03 && l0.sampler_identity;
  all_pass &= l0_ok;
  emit({{"check", "lambda0_reduction"}, {"status", l0_ok ? "PASS" : "FAIL"},
        {"shifted_vs_log_softmax", l0.shifted_vs_log_softmax}, {"label_counts", l0.label_counts},
        {"probit_vs_softmax", l0.probit_vs_softmax}, {"probit_budget", 0.03}, {"sampler_identity", l0.sampler_identity}});

  for (const auto& s : plsp::probit_slope_report()) {
    emit({{"report", "probit_slope"}, {"name", s.name}, {"beta", s.beta}, {"sup_error", s.sup_error}});
  }

  const auto weak = plsp::check_weak_branch({v.feature_dim}, {v.lambda}, v.weak_samples, beta, v.seed, v.labels);
  for (const auto& c : weak) {
    emit({{"report", "weak_branch_mc"}, {"feature_dim", c.feature_dim}, {"lambda", c.lambda}, {"beta", beta},
          {"closed_form", c.closed_form}, {"monte_carlo", c.monte_carlo}, {"max_rel_error", c.max_rel_error}});
  }
  return all_pass ? 0 : kExitFailure;
}

int run_sweep(const TrainFlags& f, const std::string& ks_text) {
  plsp::TrainConfig base = resolve_config(f);
  const Loaded d = load(f);
  std::vector<std::size_t> ks;
  {
    plsp::TrainConfig probe;
    plsp::apply_config_value(probe, "hidden", ks_text);
    ks = probe.hidden;
  }
  if (ks.empty()) throw plsp::InvalidArgument("--ks must list at least one value");
  MetricsWriter writer(f.metrics);
  for (std::size_t k : ks) {
    plsp::TrainConfig c = base;
    c.k = k;
    plsp::MetricsRecord last;
    const plsp::Classifier model = plsp::train_plsp(d.train, c, d.test_ptr(), [&](const plsp::MetricsRecord& r) { last = r; });
    const auto test = d.test ? plsp::evaluate(model, *d.test) : plsp::evaluate(model, d.train);
    nlohmann::ordered_json j;
    j["k"] = k;
    j["micro_f1"] = test ? test->micro : 0.0;
    j["macro_f1"] = test ? test->macro : 0.0;
    j["omega_l"] = last.omega_l;
    j["omega_u"] = last.omega_u;
    writer.write(j.dump());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  plsp::kernels::apply_thread_env();
  CLI::App app{"Partial-label learning with semantic pseudo-labeling"};
  app.require_subcommand(1);

  std::size_t n = 2000, test_n = 0, labels = 4, dim = 2;
  double sep = 6.0, q = 0.0;
  std::string strategy = "uss", out, test_out;
  std::uint64_t gen_seed = 0;
  CLI::App* gen = app.add_subcommand("generate", "Blobs dataset with USS or FPS candidate sets");
  gen->add_option("--n", n, "Training instances");
  gen->add_option("--test-n", test_n, "Held-out instances");
  gen->add_option("--labels", labels, "Number of classes");
  gen->add_option("--dim", dim, "Feature dimension");
  gen->add_option("--separation", sep, "Minimum center distance");
  gen->add_option("--strategy", strategy, "uss or fps");
  gen->add_option("--q", q, "FPS flip probability");
  gen->add_option("--seed", gen_seed, "Random seed");
  gen->add_option("--out", out, "Training dataset path")->required();
  gen->add_option("--test-out", test_out, "Held-out dataset path");

  TrainFlags pre_flags, train_flags, df_flags, sweep_flags;
  CLI::App* pre = app.add_subcommand("pretrain", "Disambiguation-free pre-training only");
  add_train_flags(pre, pre_flags, true);
  CLI::App* train = app.add_subcommand("train", "Pre-training followed by semi-supervised training");
  add_train_flags(train, train_flags, true);
  train->add_option("--init", train_flags.init, "Start the semi-supervised stage from this checkpoint");
  CLI::App* df = app.add_subcommand("df-baseline", "Disambiguation-free training for T0 + T epochs");
  add_train_flags(df, df_flags, true);
  CLI::App* sweep = app.add_subcommand("sweep-k", "Full training for each k in a list");
  add_train_flags(sweep, sweep_flags, false);
  std::string ks_text = "0,50,200,2000";
  sweep->add_option("--ks", ks_text, "Comma-separated k values");

  std::string ckpt, eval_data, eval_metrics;
  CLI::App* ev = app.add_subcommand("eval", "Macro/micro F1 of a checkpoint");
  ev->add_option("--checkpoint", ckpt, "Checkpoint path")->required();
  ev->add_option("--data", eval_data, "Dataset path")->required();
  ev->add_option("--metrics", eval_metrics, "Output path (stdout if omitted)");

  VerifyFlags vf;
  CLI::App* ver = app.add_subcommand("verify", "Monte-Carlo checks of the closed-form losses");
  ver->add_option("--seed", vf.seed);
  ver->add_option("--lambda", vf.lambda);
  ver->add_option("--instances", vf.instances);
  ver->add_option("--samples", vf.samples);
  ver->add_option("--weak-samples", vf.weak_samples);
  ver->add_option("--labels", vf.labels);
  ver->add_option("--feature-dim", vf.feature_dim);
  ver->add_flag("--beta-pi2-8", vf.beta_pi2_8);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what(), kExitUsage);
    return kExitUsage;
  }

  try {
    if (*gen) return run_generate(n, test_n, labels, dim, sep, strategy, q, gen_seed, out, test_out);
    if (*pre) return run_train(pre_flags, TrainMode::kPretrain);
    if (*train) return run_train(train_flags, TrainMode::kFull);
    if (*df) return run_train(df_flags, TrainMode::kDf);
    if (*sweep) return run_sweep(sweep_flags, ks_text);
    if (*ev) return run_eval(ckpt, eval_data, eval_metrics);
    if (*ver) return run_verify(vf);
  } catch (const plsp::IoError& e) {
    print_error("io", e.what(), kExitIo);
    return kExitIo;
  } catch (const plsp::ParseError& e) {
    print_error(std::string("parse:") + plsp::to_string(e.kind()), e.what(), kExitIo);
    return kExitIo;
  } catch (const plsp::InvalidArgument& e) {
    print_error("invalid_argument", e.what(), kExitParam);
    return kExitParam;
  } catch (const std::exception& e) {
    print_error("internal", e.what(), kExitFailure);
    return kExitFailure;
  }
  return kExitFailure;
}
