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
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ebf/checkpoint.hpp"
#include "ebf/model.hpp"

namespace ebf {

inline constexpr std::int64_t kIgnoreTarget = -1;

// Mean over non-ignored positions of the cross-entropy against
// (1 - eps) on the target and eps / (V - 1) elsewhere. logprobs [..., V],
// targets one per row (kIgnoreTarget to skip).
Tensor label_smoothed_ce(const Tensor& logprobs, std::span<const std::int64_t> targets, double smoothing);

// (1 - w) aed + w ctc.
Tensor joint_loss(const Tensor& aed_loss, const Tensor& ctc_loss, double ctc_weight);

double warmup_lr(std::int64_t step, double peak_lr, std::int64_t warmup_steps);

struct AdamConfig {
  double beta1 = 0.9, beta2 = 0.98, eps = 1e-9, weight_decay = 1e-6;
};

struct AdamState {
  std::int64_t step = 0;
  std::vector<std::vector<double>> m, v;
};

// p <- p - lr wd p, then the bias-corrected Adam update. Parameters without
// a gradient are treated as having a zero gradient.
void adam_step(ParamList& params, AdamState& state, double lr, const AdamConfig& cfg);

// Scales all grads so their global L2 norm is at most max_norm. Returns the
// pre-clip norm.
double clip_grad_norm(ParamList& params, double max_norm);

struct ToySample {
  Tensor mel;                          // [T, 80]
  std::vector<std::int64_t> tokens;    // vocabulary ids, no sos/eos
};

// Mel bin whose center carries token `index` (0-based among regular tokens).
int toy_tone_bin(int index, int num_tokens, int num_mels = 80);
inline constexpr int kToySegmentSamples = 1920;  // 120 ms at 16 kHz

// Token sequences without adjacent repeats; each token is a 120 ms sine at
// its mel-bin center frequency, plus N(0, 0.01^2) noise.
std::vector<ToySample> toy_task_generate(Rng& rng, int num_samples, const Vocabulary& vocab, int min_len, int max_len);
Waveform toy_waveform(Rng& rng, std::span<const std::int64_t> tokens, const Vocabulary& vocab);

struct Batch {
  PaddedBatch features;
  std::vector<std::vector<std::int64_t>> targets;
};
Batch make_batch(const std::vector<ToySample>& data, std::span<const std::size_t> indices);

struct LossParts {
  Tensor loss, ctc, aed;
};
LossParts compute_loss(const AsrModel& model, const Batch& batch, const ForwardContext& ctx);

// Teacher-forced next-token accuracy (eos included).
double validation_accuracy(const AsrModel& model, const std::vector<ToySample>& data, int batch_size = 32);
// Greedy attention decoding (beam 1, no fusion); edits / reference tokens.
double greedy_token_error(const AsrModel& model, const std::vector<ToySample>& data);
std::int64_t edit_distance(std::span<const std::int64_t> a, std::span<const std::int64_t> b);

struct MetricRecord {
  std::int64_t step = 0;
  double lr = 0, loss = 0, ctc_loss = 0, aed_loss = 0;
  double val_acc = -1;  // < 0: not evaluated at this step
};
std::string to_jsonl(const MetricRecord& r);

struct TrainResult {
  std::vector<MetricRecord> log;
  std::vector<Checkpoint> kept;  // top-k by validation accuracy
  std::vector<double> kept_scores;
  std::vector<std::int64_t> kept_steps;
  Checkpoint averaged;
  double best_val_acc = 0.0;
  std::int64_t steps_run = 0;
};

struct TrainHooks {
  std::function<void(const MetricRecord&)> on_record;
};

// Trains `model` in place. On return the model holds the averaged weights.
TrainResult train_loop(AsrModel& model, const std::vector<ToySample>& train, const std::vector<ToySample>& val,
                       Rng& rng, const TrainHooks& hooks = {});

// Fits the causal LM to the transcripts of `data`.
void train_toy_lm(Decoder& lm, const std::vector<ToySample>& data, const Vocabulary& vocab, int steps, Rng& rng);

}  // namespace ebf
