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

#include <cstdint>
#include <string>
#include <vector>

#include "ebf/encoder.hpp"

namespace ebf {

struct ProfileRow {
  std::string name;
  std::int64_t params = 0;
  double macs = 0.0;
};

struct ProfileReport {
  std::vector<ProfileRow> rows;
  std::int64_t total_params = 0;
  double total_macs = 0.0;
  std::int64_t encoder_params = 0;  // rows under "encoder."
  double input_seconds = 0.0;       // 0 when MACs were not requested
  std::int64_t frames = 0;
  std::int64_t encoder_frames = 0;
};

// Groups parameters by module path, collapsing block indices:
// "encoder.blocks.3.global.linear_q.weight" -> "encoder.blocks.*.global".
std::string module_group(const std::string& param_name);
ProfileReport count_params(const ParamList& params);

// Closed forms. Per-block counts sum the sublayers the block instantiates.
std::int64_t frontend_params(const EncoderConfig& cfg);
std::int64_t block_params(const EncoderConfig& cfg);
std::int64_t encoder_params(const EncoderConfig& cfg);

// "10 seconds" = 1000 frames at a 10 ms hop. Multiply-adds only:
//   linear T*in*out, depthwise conv T*c*k,
//   attention 4 T d^2 (q,k,v,out) + (2T-1) d^2 (positions)
//             + T^2 d (content) + T (2T-1) d (position scores) + T^2 d (context),
//   frontend convs at their output geometry, SE squeeze MLP once per utterance.
// Rows carry the analytic params and MACs of each module group.
ProfileReport estimate_macs(const EncoderConfig& cfg, double input_seconds = 10.0);

std::string format_report(const ProfileReport& r, bool json);

}  // namespace ebf
