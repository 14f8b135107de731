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
#include <optional>
#include <string>
#include <vector>

#include "ebf/audio.hpp"
#include "ebf/decoder.hpp"
#include "ebf/encoder.hpp"

namespace ebf {

struct TrainConfig {
  double ctc_weight = 0.3;
  double label_smoothing = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double weight_decay = 1e-6;
  int warmup_steps = 1000;
  double peak_lr = 2e-3;  // toy-tuned; not a value from the recipe
  int total_steps = 5000;
  int average_top_k = 10;
  int batch_size = 16;
  int val_interval = 100;
  int log_interval = 10;
  double grad_clip = 0.0;       // global-norm clip; 0 disables
  double target_val_acc = 0.0;  // stop once all top-k kept checkpoints reach it; 0 disables
  bool spec_augment = true;
  std::uint64_t seed = 1;

  void validate() const;
};

// Synthetic tone-sequence task.
struct ToyTaskConfig {
  int num_train = 2000;
  int num_val = 200;
  int min_len = 2;
  int max_len = 5;
  std::uint64_t seed = 7;
  int lm_steps = 300;  // training steps of the companion toy LM

  void validate() const;
};

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  TrainConfig training;
  SpecAugmentConfig spec_augment;
  ToyTaskConfig toy;
  Vocabulary vocab = Vocabulary::toy(12);

  // Resolves derived fields (decoder d / vocab size follow the encoder and
  // vocabulary) and validates everything.
  ModelConfig resolved() const;
};

// Encoder + CTC head + attention decoder.
class AsrModel {
 public:
  AsrModel() = default;
  AsrModel(const ModelConfig& cfg, Rng& rng);

  const ModelConfig& config() const { return cfg_; }
  Encoder& encoder() { return encoder_; }
  const Encoder& encoder() const { return encoder_; }
  const Decoder& decoder() const { return decoder_; }
  Decoder& decoder() { return decoder_; }
  const Linear& ctc_head() const { return ctc_; }

  PaddedBatch encode(const PaddedBatch& features, const ForwardContext& ctx) const;
  // log_softmax(enc W + b): [B, T', V].
  Tensor ctc_logprobs(const PaddedBatch& encoded) const;

  ParamList params() const;

 private:
  ModelConfig cfg_;
  Encoder encoder_;
  Linear ctc_;
  Decoder decoder_;
};

// Companion causal LM over the same vocabulary, parameters under "lm.".
DecoderConfig lm_config(const ModelConfig& cfg);

std::int64_t count_elements(const ParamList& params);

}  // namespace ebf
