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

// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <omp.h>
#include <sys/wait.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "plsp/metrics.hpp"
#include "plsp/objective.hpp"
#include "plsp/trainer.hpp"
#include "plsp/verify.hpp"
#include "test_support.hpp"

using namespace plsp;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr std::size_t kBoundInstances = 50;
constexpr std::size_t kBoundSamples = 2000;
constexpr double kBoundSeconds = 60.0;
constexpr std::size_t kWeakSamples = 1000000;
constexpr double kWeakRelError = 0.02;
constexpr double kWeakSeconds = 120.0;
constexpr double kLambda0Tol = 1e-9;
constexpr std::size_t kMergeTrials = 1000;
constexpr double kMergeTol = 1e-10;
constexpr double kGradRelError = 1e-4;
constexpr double kSeWidth = 3.0;
constexpr std::size_t kGenDraws = 100000;
constexpr double kChiAlpha = 0.01;
constexpr double kE2eMargin = 0.02;
constexpr double kE2eFloor = 0.90;
constexpr double kE2eSeconds = 300.0;
constexpr double kTauFloor = 0.5;
constexpr std::size_t kSweepInteriorK = 17;  // 200 per class out of 6000, scaled to 500 per class

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PLSP_CLI_PATH) + " " + args;
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome bound_direction() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cases = check_bound_direction(kBoundInstances, kBoundSamples, {0.01, 0.05, 0.1}, 2026);
  const double secs = seconds_since(t0);
  std::size_t passed = 0;
  double worst = 1e300;
  for (const auto& c : cases) {
    passed += c.pass;
    worst = std::min(worst, (c.closed_form_ce - c.mc_ce) / std::max(c.mc_se, 1e-300));
  }
  return {passed == cases.size() && cases.size() >= kBoundInstances && secs < kBoundSeconds,
          fmt("%zu/%zu cases, min z %.2f, %.1f s", passed, cases.size(), worst, secs)};
}

Outcome weak_branch() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cases = check_weak_branch({2, 4, 6, 8}, {0.01, 0.05}, kWeakSamples, kDefaultProbitSlope, 2026);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  for (const auto& c : cases) worst = std::max(worst, c.max_rel_error);
  std::string slopes;
  for (const auto& s : probit_slope_report()) slopes += fmt(" %s=%.4f", s.name.c_str(), s.sup_error);
  return {worst <= kWeakRelError && secs < kWeakSeconds,
          fmt("max rel error %.4f over %zu cases, %.1f s; sup errors:", worst, cases.size(), secs) + slopes};
}

Outcome lambda0_reduction() {
  double worst = 0.0;
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t l = 3 + uniform_index(rng, 4), nl = 1 + uniform_index(rng, 6), nu = 1 + uniform_index(rng, 8);
    const std::vector<std::size_t> hidden = {6};
    const Classifier model = Classifier::init(4, hidden, l, rng);
    const Tensor x = testing::random_tensor(nl + 2 * nu, 4, rng, 1.5);
    Tensor weak_x(nu, 4);
    for (std::size_t b = 0; b < nu; ++b) {
      for (std::size_t c = 0; c < 4; ++c) weak_x(b, c) = x(nl + b, c) + 0.05 * standard_normal(rng);
    }
    std::vector<Label> labels(nl);
    for (auto& y : labels) y = static_cast<Label>(uniform_index(rng, l));
    std::vector<LabelMask> cands;
    for (std::size_t b = 0; b < nu; ++b) {
      LabelMask m(l);
      while (m.empty() || m.is_full()) {
        m = LabelMask(l);
        for (Label j = 0; j < l; ++j) {
          if (uniform01(rng) < 0.5) m.set(j);
        }
      }
      cands.push_back(m);
    }
    ClassCovStats stats(l, 6);
    const Tensor f = model.features(testing::random_tensor(40, 4, rng));
    std::vector<Label> cls(40);
    for (std::size_t i = 0; i < 40; ++i) cls[i] = static_cast<Label>(i % l);
    stats.update(f, cls);
    const ObjectiveSettings settings{0.8, 0.0, kDefaultProbitSlope, std::vector<double>(l, 1.0 / static_cast<double>(l))};

    const auto weak = evaluate_weak_batch(snapshot_frozen(model), weak_x, cands, stats, settings);
    ad::Graph g;
    const BoundParams bound = model.bind(g);
    ad::Var feats = model.features(bound, g.constant(x));
    const BatchObjective obj = build_objective(bound, feats, {nl, nu}, labels, cands, weak, stats, settings);

    // Plain-softmax counterparts.
    const Tensor z = model.logits(x), zw = model.logits(weak_x);
    double l_ref = 0.0, cl_ref = 0.0, r_ref = 0.0;
    for (std::size_t i = 0; i < nl; ++i) l_ref -= (z(i, labels[i]) - logsumexp(z.row(i))) / static_cast<double>(nl);
    std::vector<Label> yhat(z.rows(), 0);
    for (std::size_t b = 0; b < nu; ++b) {
      const auto p = softmax(z.row(nl + b));
      for (Label j = 0; j < l; ++j) {
        if (!cands[b].contains(j)) cl_ref -= std::log(1.0 - p[j]) / static_cast<double>(nu);
      }
      const auto pw = probit_weak_probs_from_logits(zw.row(b), Tensor(l, l), 0.0, kDefaultProbitSlope);
      const auto t = pseudo_target(pw, cands[b]);
      if (!t || !confidence_indicator(pw, cands[b], settings.tau)) continue;
      const auto ps = softmax(z.row(nl + nu + b));
      for (std::size_t j = 0; j < l; ++j) {
        if ((*t)[j] > 0.0) r_ref += (*t)[j] * (std::log((*t)[j]) - std::log(ps[j])) / static_cast<double>(nu);
      }
    }
    worst = std::max({worst, std::abs(obj.report.loss_l - l_ref), std::abs(obj.report.loss_cl - cl_ref),
                      std::abs(obj.report.reg_u - r_ref)});

    for (std::size_t i = 0; i < z.rows(); ++i) yhat[i] = static_cast<Label>(uniform_index(rng, l));
    ad::Graph h;
    const Tensor shifted = shifted_log_softmax(h.constant(z), h.constant(model.params().head), yhat, stats, 0.0).value();
    for (std::size_t i = 0; i < z.rows(); ++i) {
      const double lse = logsumexp(z.row(i));
      for (std::size_t j = 0; j < l; ++j) worst = std::max(worst, std::abs(shifted(i, j) - (z(i, j) - lse)));
    }
  }
  const Lambda0Report rep = check_lambda0(2000, {3}, kDefaultProbitSlope, 32);
  worst = std::max(worst, rep.shifted_vs_log_softmax);
  return {worst <= kLambda0Tol && rep.sampler_identity, fmt("max |diff| %.3g over 50 batches", worst)};
}

Outcome covariance_merge() {
  Rng rng(41);
  double worst = 0.0;
  for (std::size_t trial = 0; trial < kMergeTrials; ++trial) {
    const std::size_t d = 1 + uniform_index(rng, 8), l = 1 + uniform_index(rng, 4), n = 1 + uniform_index(rng, 120);
    std::vector<std::vector<std::vector<double>>> by_class(l);
    ClassCovStats s(l, d);
    for (std::size_t done = 0; done < n;) {
      const std::size_t b = std::min(n - done, 1 + uniform_index(rng, 16));
      Tensor batch(b, d);
      std::vector<Label> labels(b);
      for (std::size_t i = 0; i < b; ++i) {
        labels[i] = static_cast<Label>(uniform_index(rng, l));
        std::vector<double> row(d);
        for (std::size_t k = 0; k < d; ++k) row[k] = batch(i, k) = 4.0 * standard_normal(rng) + static_cast<double>(k);
        by_class[labels[i]].push_back(row);
      }
      s.update(batch, labels);
      done += b;
    }
    for (Label j = 0; j < l; ++j) {
      const auto& rows = by_class[j];
      if (rows.empty()) continue;
      const double m = static_cast<double>(rows.size());
      std::vector<double> mean(d, 0.0);
      for (const auto& r : rows) {
        for (std::size_t a = 0; a < d; ++a) mean[a] += r[a] / m;
      }
      for (std::size_t a = 0; a < d; ++a) {
        worst = std::max(worst, std::abs(s.mean(j)[a] - mean[a]));
        for (std::size_t c = 0; c < d; ++c) {
          double cov = 0.0;
          for (const auto& r : rows) cov += (r[a] - mean[a]) * (r[c] - mean[c]) / m;
          worst = std::max(worst, std::abs(s.covariance(j)(a, c) - cov));
        }
      }
    }
  }
  return {worst <= kMergeTol, fmt("max |diff| %.3g over %zu trials", worst, kMergeTrials)};
}

Outcome gradient_integrity() {
  Rng rng(51);
  const std::size_t nl = 4, nu = 5;
  const std::vector<std::size_t> hidden = {8};
  Classifier model = Classifier::init(5, hidden, 3, rng);
  const Tensor x = testing::random_tensor(nl + 2 * nu, 5, rng, 1.5);
  const Tensor weak_x = testing::random_tensor(nu, 5, rng, 1.5);
  const std::vector<Label> labels = {0, 1, 2, 1};
  const std::vector<LabelMask> cands = {LabelMask::from_labels(3, {0, 1}), LabelMask::from_labels(3, {1, 2}),
                                        LabelMask::from_labels(3, {2}), LabelMask::from_labels(3, {0, 2}),
                                        LabelMask::from_labels(3, {0})};
  ClassCovStats stats(3, 8);
  std::vector<Label> cls(30);
  for (std::size_t i = 0; i < 30; ++i) cls[i] = static_cast<Label>(i % 3);
  stats.update(model.features(testing::random_tensor(30, 5, rng)), cls);
  const ObjectiveSettings settings{0.7, 0.3, kDefaultProbitSlope, {0.34, 0.34, 0.34}};
  const auto weak = evaluate_weak_batch(snapshot_frozen(model), weak_x, cands, stats, settings);
  auto objective = [&](ad::Graph& g, const BoundParams& b) {
    return build_objective(b, model.features(b, g.constant(x)), {nl, nu}, labels, cands, weak, stats, settings);
  };
  ad::Graph g;
  const BoundParams bound = model.bind(g);
  const BatchObjective obj = objective(g, bound);
  ad::Gradients grads = g.backward(obj.total);
  const auto analytic = model.gradients(bound, grads);
  const auto params = model.tensors();
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    worst = std::max(worst, testing::max_fd_rel_error(*params[t], analytic[t], [&](const Tensor& v) {
      const Tensor saved = *params[t];
      *params[t] = v;
      ad::Graph h;
      const double out = objective(h, model.bind(h)).total.value().item();
      *params[t] = saved;
      return out;
    }));
  }
  return {worst < kGradRelError && obj.report.passed > 0,
          fmt("max rel error %.3g, %zu of %zu regularized", worst, obj.report.passed, nu)};
}

Outcome generation_statistics() {
  std::string detail;
  bool ok = true;
  double worst_z = 0.0;
  for (double q : {0.1, 0.3, 0.6}) {
    for (std::size_t l : {3u, 4u, 5u}) {
      const std::vector<Label> truth(kGenDraws, 1);
      const auto masks = generate_candidates(truth, l, {Strategy::kFps, q, 61 + l});
      const auto law = testing::fps_exact_law(l, 1, q);
      for (Label j = 0; j < l; ++j) {
        std::size_t hits = 0;
        for (const auto& m : masks) hits += m.contains(j);
        const double p = law.inclusion[j], freq = static_cast<double>(hits) / kGenDraws;
        const double se = std::sqrt(p * (1.0 - p) / kGenDraws);
        const double z = se > 0 ? std::abs(freq - p) / se : (freq == p ? 0.0 : 1e9);
        worst_z = std::max(worst_z, z);
        ok = ok && z <= kSeWidth;
      }
    }
  }
  double min_p = 1.0;
  for (std::size_t l : {3u, 4u, 5u}) {
    const std::vector<Label> truth(kGenDraws, 0);
    const auto masks = generate_candidates(truth, l, {Strategy::kUss, 0.0, 71 + l});
    std::map<std::uint64_t, std::size_t> counts;
    for (const auto& m : masks) ++counts[m.words()[0]];
    const std::size_t cells = (std::size_t{1} << (l - 1)) - 1;
    const double expected = static_cast<double>(kGenDraws) / static_cast<double>(cells);
    double stat = 0.0;
    for (const auto& [mask, c] : counts) stat += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
    stat += static_cast<double>(cells - std::min(cells, counts.size())) * expected;
    const boost::math::chi_squared dist(static_cast<double>(cells - 1));
    const double p = boost::math::cdf(boost::math::complement(dist, stat));
    min_p = std::min(min_p, p);
    ok = ok && counts.size() == cells && p > kChiAlpha;
  }
  return {ok, fmt("FPS max |z| %.2f, USS min p-value %.3f", worst_z, min_p)};
}

Outcome end_to_end() {
  omp_set_num_threads(1);
  Rng rng(1);
  auto [train, test] = make_blobs_with_holdout(2000, 1000, 4, 2, 6.0, rng);
  train.candidates = generate_candidates(*train.truth, 4, {Strategy::kFps, 0.6, 1});
  test.candidates = generate_candidates(*test.truth, 4, {Strategy::kFps, 0.6, 2});
  TrainConfig c;
  c.epochs = 60;
  c.iters = 50;
  c.seed = 1;
  const auto t0 = std::chrono::steady_clock::now();
  const Classifier plsp_model = train_plsp(train, c, &test);
  const double secs = seconds_since(t0);
  const Classifier df_model = train_df_baseline(train, c, &test);
  omp_set_num_threads(omp_get_num_procs());
  const double plsp_f1 = evaluate(plsp_model, test)->micro, df_f1 = evaluate(df_model, test)->micro;
  return {plsp_f1 - df_f1 >= kE2eMargin && plsp_f1 >= kE2eFloor && secs < kE2eSeconds,
          fmt("PLSP %.4f vs DF %.4f (margin %+.4f), PLSP %.1f s on one thread", plsp_f1, df_f1, plsp_f1 - df_f1, secs)};
}

Outcome schedules() {
  bool ok = schedule_gamma(0, 60, 1.0) == 0.0 && schedule_lambda(0, 60, 0.01) == 0.0 &&
            schedule_gamma(60, 60, 1.0) == 1.0 && schedule_lambda(60, 60, 0.01) == 0.01;
  const std::vector<std::size_t> zeros(4, 0);
  ok = ok && update_tau(zeros, 0.75, kTauFloor) == std::vector<double>(4, 0.75);
  Rng rng(81);
  PLDataset d = make_blobs(400, 4, 2, 4.0, rng);
  d.candidates = generate_candidates(*d.truth, 4, {Strategy::kFps, 0.5, 81});
  TrainConfig c;
  c.hidden = {32};
  c.pretrain_epochs = 2;
  c.epochs = 20;
  c.iters = 10;
  c.k = 20;
  c.seed = 81;
  std::vector<ScheduleState> states;
  train_ss(d, pretrain(d, init_model(d, c), c), c, nullptr, {}, &states);
  double lo = 1.0, hi = 0.0;
  for (const auto& s : states) {
    for (double t : s.tau) {
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
  }
  ok = ok && states.size() == c.epochs && lo >= kTauFloor && hi <= c.tau0;
  return {ok, fmt("tau range [%.3f, %.3f] over %zu epochs", lo, hi, states.size())};
}

Outcome determinism(const fs::path& dir) {
  const std::string data = (dir / "det.pld").string();
  if (run_cli("generate --n 500 --labels 4 --strategy fps --q 0.6 --seed 7 --out " + data) != 0) return {false, "generate failed"};
  const std::string common = "train --data " + data + " --seed 7 --deterministic --epochs 6 --iters 10";
  const fs::path a = dir / "a.jsonl", b = dir / "b.jsonl";
  if (run_cli(common + " --out " + (dir / "a.ckpt").string() + " --metrics " + a.string()) != 0 ||
      run_cli(common + " --out " + (dir / "b.ckpt").string() + " --metrics " + b.string()) != 0) {
    return {false, "train failed"};
  }
  const std::string sa = slurp(a), sb = slurp(b);
  return {!sa.empty() && sa == sb, fmt("%zu bytes, %s", sa.size(), sa == sb ? "identical" : "different")};
}

Outcome k_sensitivity(const fs::path& dir) {
  const std::string tr = (dir / "sweep.pld").string(), te = (dir / "sweep_test.pld").string(),
                    out = (dir / "sweep.jsonl").string();
  if (run_cli("generate --n 2000 --test-n 1000 --labels 4 --dim 2 --separation 6 --strategy fps --q 0.6 --seed 1 --out " +
              tr + " --test-out " + te) != 0) {
    return {false, "generate failed"};
  }
  const std::string ks = fmt("0,%zu,2000", kSweepInteriorK);
  if (run_cli("sweep-k --data " + tr + " --test " + te + " --seed 1 --epochs 60 --iters 50 --ks " + ks +
              " --metrics " + out) != 0) {
    return {false, "sweep-k failed"};
  }
  std::map<std::size_t, double> f1;
  std::istringstream lines(slurp(out));
  for (std::string line; std::getline(lines, line);) {
    const auto j = nlohmann::json::parse(line);
    f1[j.at("k").get<std::size_t>()] = j.at("micro_f1").get<double>();
  }
  if (f1.size() != 3) return {false, "sweep reported " + std::to_string(f1.size()) + " values"};
  const double lo = f1[0], mid = f1[kSweepInteriorK], hi = f1[2000];
  return {mid >= lo && mid >= hi, fmt("micro F1 k=0 %.4f, k=%zu %.4f, k=2000 %.4f", lo, kSweepInteriorK, mid, hi)};
}

}  // namespace

int main() {
  const fs::path dir = fs::temp_directory_path() / ("plsp_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 bound direction", bound_direction},
      {"2 weak-branch approximation", weak_branch},
      {"3 lambda=0 reduction", lambda0_reduction},
      {"4 covariance merge", covariance_merge},
      {"5 gradient integrity", gradient_integrity},
      {"6 generation statistics", generation_statistics},
      {"7 end-to-end vs DF baseline", end_to_end},
      {"8 schedules", schedules},
      {"9 determinism", [&] { return determinism(dir); }},
      {"10 k-sensitivity endpoints", [&] { return k_sensitivity(dir); }},
  };
  std::size_t failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %-30s %s  %s\n", name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(dir);
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed ? 1 : 0;
}
