// Copyright 2026 The ebf Authors. All Rights Reserved.
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

#include <string>

#include "ebf/model.hpp"

namespace ebf {

// Strict JSON: unknown keys and wrong value types are config errors, and
// every nested invariant is checked on load. Missing keys keep defaults.
ModelConfig parse_config(const std::string& json_text);
ModelConfig load_config(const std::string& path);
std::string config_to_json(const ModelConfig& cfg, int indent = 2);

}  // namespace ebf
