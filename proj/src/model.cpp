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

#include "ebf/model.hpp"

#include <cmath>

#include "ebf/ops.hpp"

namespace ebf {

void TrainConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) { check(ok, Errc::kConfig, "training: " + msg); };
  need(ctc_weight >= 0.0 && ctc_weight <= 1.0, "ctc_weight must be in [0, 1]");
  need(label_smoothing >= 0.0 && label_smoothing < 1.0, "label_smoothing must be in [0, 1)");
  need(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "betas must be in [0, 1)");
  need(eps > 0.0 && weight_decay >= 0.0, "eps must be positive and weight_decay non-negative");
  need(warmup_steps >= 1, "warmup_steps must be >= 1");
  need(peak_lr >= 0.0, "peak_lr must be non-negative");
  need(total_steps >= 0 && average_top_k >= 1 && batch_size >= 1, "steps, top-k and batch size must be positive");
  need(val_interval >= 1 && log_interval >= 1, "intervals must be >= 1");
  need(grad_clip >= 0.0 && target_val_acc >= 0.0 && target_val_acc <= 1.0, "bad grad_clip / target_val_acc");
}

void ToyTaskConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) { check(ok, Errc::kConfig, "toy: " + msg); };
  need(num_train >= 1 && num_val >= 1, "dataset sizes must be positive");
  need(min_len >= 1 && max_len >= min_len, "need 1 <= min_len <= max_len");
  need(lm_steps >= 0, "lm_steps must be non-negative");
}

ModelConfig ModelConfig::resolved() const {
  ModelConfig r = *this;
  r.encoder = r.encoder.resolved();
  r.encoder.validate();
  r.vocab.validate();
  r.decoder.d = r.encoder.d;
  r.decoder.vocab_size = static_cast<int>(r.vocab.size());
  r.decoder = r.decoder.resolved();
  r.decoder.validate();
  r.training.validate();
  r.spec_augment.validate(r.encoder.input_dim);
  r.toy.validate();
  return r;
}

AsrModel::AsrModel(const ModelConfig& cfg, Rng& rng) : cfg_(cfg.resolved()) {
  encoder_ = Encoder(cfg_.encoder, rng);
  ctc_ = Linear::create(cfg_.encoder.d, cfg_.vocab.size(), true, rng);
  decoder_ = Decoder(cfg_.decoder, rng);
}

PaddedBatch AsrModel::encode(const PaddedBatch& features, const ForwardContext& ctx) const {
  return encoder_.forward(features, ctx);
}

Tensor AsrModel::ctc_logprobs(const PaddedBatch& encoded) const { return log_softmax(ctc_(encoded.x)); }

ParamList AsrModel::params() const {
  ParamList out;
  encoder_.collect("encoder", out);
  ctc_.collect("ctc.linear", out);
  decoder_.collect("decoder", out);
  return out;
}

DecoderConfig lm_config(const ModelConfig& cfg) {
  DecoderConfig lm = cfg.resolved().decoder;
  lm.cross_attention = false;
  return lm;
}

std::int64_t count_elements(const ParamList& params) {
  std::int64_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

}  // namespace ebf
