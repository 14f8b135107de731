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
#include <ostream>
#include <string>
#include <vector>

#include "ebf/beam.hpp"
#include "ebf/checkpoint.hpp"
#include "ebf/model.hpp"
#include "ebf/training.hpp"

// End-to-end drivers shared by the C API and the tests.

namespace ebf {

struct ToyData {
  std::vector<ToySample> train, val;
};
ToyData make_toy_data(const ModelConfig& cfg);

struct ToyRunSummary {
  double val_acc = 0.0;     // averaged model
  double token_error = 0.0;  // greedy decode, averaged model
  double best_val_acc = 0.0;
  std::int64_t steps = 0;
  double seconds = 0.0;
  std::int64_t params = 0;
  std::string averaged_path;
  std::vector<std::string> checkpoint_paths;
};

// Trains the model and the companion LM, writes <out>/metrics.jsonl,
// <out>/checkpoints/step_N.ebf for the kept checkpoints and
// <out>/averaged.ebf (model plus "lm." parameters).
ToyRunSummary run_toy_recipe(const ModelConfig& cfg, const std::string& out_dir, std::ostream* progress = nullptr);

// Model and optional LM rebuilt from a checkpoint; the LM is present iff the
// checkpoint carries "lm." entries.
struct LoadedModel {
  AsrModel model;
  Decoder lm;
  bool has_lm = false;
};
LoadedModel load_model(const ModelConfig& cfg, const Checkpoint& ckpt);

struct DecodeResult {
  Hypothesis best;
  std::vector<std::string> text;       // regular tokens only
  std::vector<std::string> reference;  // toy input only
  std::int64_t frames = 0;
  std::int64_t encoder_frames = 0;
};

// input: a 16 kHz mono wav path, "toy" or "toy:<seed>".
DecodeResult decode_input(const LoadedModel& m, const std::string& input, const FusionWeights& w);

std::string format_decode(const DecodeResult& r, const FusionWeights& w, bool json);

struct AblationRow {
  std::string label;
  std::string setting;
  std::int64_t encoder_params = 0;
  double macs = 0.0;
  double val_acc = 0.0;
  double token_error = 0.0;
};

// sweep: "merge_variant" (concat/depth-conv/multi-kernel/SE/conv module
// internal and external) or "merge_kernel" over {3, 15, 31, 63}.
std::vector<AblationRow> run_ablation(const ModelConfig& base, const std::string& sweep, int steps,
                                      std::ostream* progress = nullptr);
std::string format_ablation(const std::vector<AblationRow>& rows, const std::string& sweep, bool json);

}  // namespace ebf
