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
#include <functional>
#include <string>
#include <vector>

#include "ebf/encoder.hpp"

namespace ebf {

struct GradcheckOptions {
  double h = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
};

struct GradcheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::string worst_param;
  std::int64_t elements = 0;
  bool passed = false;
};

// Compares the backward gradient of loss_fn with central differences for
// every element of every leaf. Per leaf the error is
// |a - n| / max(|a|, |n|, 1e-6 max(1, |G|)) in the L2 norm, G being the
// gradient over all leaves; the result reports the largest. loss_fn must be deterministic (reseed any rng it uses).
GradcheckResult gradcheck(const std::string& name, const std::function<Tensor()>& loss_fn, ParamList leaves,
                          const GradcheckOptions& opts = {});

// Every primitive and composite on small (T <= 6, d <= 32) instances.
// Kernel sizes and FFN style are taken from `base`.
std::vector<GradcheckResult> run_gradcheck_suite(const EncoderConfig& base, const GradcheckOptions& opts = {});

}  // namespace ebf
