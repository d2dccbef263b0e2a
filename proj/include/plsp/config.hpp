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

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "plsp/trainer.hpp"

namespace plsp {

using ConfigMap = std::map<std::string, std::string>;

/// Parses `key = value` lines. Blank lines and lines starting with '#' are ignored.
/// Throws InvalidArgument on a line without '=' or a repeated key.
ConfigMap parse_config(std::string_view text);
/// Throws IoError when the file cannot be read.
ConfigMap read_config(const std::filesystem::path& path);

/// Applies keys named after TrainConfig fields (plus weak_* / strong_* augmentation keys).
/// Throws InvalidArgument on unknown keys or unparsable values.
void apply_config(TrainConfig& config, const ConfigMap& values);
/// Applies a single key.
void apply_config_value(TrainConfig& config, const std::string& key, const std::string& value);

}  // namespace plsp
