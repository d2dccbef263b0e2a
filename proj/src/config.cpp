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

#include "plsp/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "plsp/errors.hpp"

namespace plsp {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, std::string_view v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw InvalidArgument("config key '" + key + "': cannot parse '" + std::string(v) + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InvalidArgument("config key '" + key + "': expected a boolean, got '" + std::string(v) + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, std::string_view v) {
  std::vector<std::size_t> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    out.push_back(parse_number<std::size_t>(key, trim(v.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace

ConfigMap parse_config(std::string_view text) {
  ConfigMap out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view line = trim(text.substr(0, nl));
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw InvalidArgument("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw InvalidArgument("config line " + std::to_string(line_no) + ": empty key");
    if (!out.emplace(key, std::string(trim(line.substr(eq + 1)))).second) {
      throw InvalidArgument("config key '" + key + "' repeated");
    }
  }
  return out;
}

ConfigMap read_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_config_value(TrainConfig& c, const std::string& key, const std::string& value) {
  const std::string_view v = value;
  auto f = [&] { return parse_number<double>(key, v); };
  auto n = [&] { return parse_number<std::size_t>(key, v); };
  if (key == "gamma0") c.gamma0 = f();
  else if (key == "lambda0") c.lambda0 = f();
  else if (key == "tau0") c.tau0 = f();
  else if (key == "k") c.k = n();
  else if (key == "pretrain_epochs") c.pretrain_epochs = n();
  else if (key == "epochs") c.epochs = n();
  else if (key == "iters") c.iters = n();
  else if (key == "batch_l") c.batch_l = n();
  else if (key == "batch_u") c.batch_u = n();
  else if (key == "lr") c.lr = f();
  else if (key == "momentum") c.momentum = f();
  else if (key == "weight_decay") c.weight_decay = f();
  else if (key == "beta") c.beta = f();
  else if (key == "tau_floor") c.tau_floor = f();
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "deterministic") c.deterministic = parse_bool(key, v);
  else if (key == "hidden") c.hidden = parse_list(key, v);
  else if (key == "weak_flip_prob") c.weak_aug.flip_prob = f();
  else if (key == "weak_pad") c.weak_aug.pad = n();
  else if (key == "weak_jitter_sigma") c.weak_aug.vector_jitter_sigma = f();
  else if (key == "strong_flip_prob") c.strong_aug.flip_prob = f();
  else if (key == "strong_pad") c.strong_aug.pad = n();
  else if (key == "strong_cutout_size") c.strong_aug.cutout_size = n();
  else if (key == "strong_jitter_sigma") c.strong_aug.vector_jitter_sigma = f();
  else if (key == "strong_mask_prob") c.strong_aug.vector_mask_prob = f();
  else throw InvalidArgument("unknown config key '" + key + "'");
}

void apply_config(TrainConfig& config, const ConfigMap& values) {
  for (const auto& [key, value] : values) apply_config_value(config, key, value);
}

}  // namespace plsp
