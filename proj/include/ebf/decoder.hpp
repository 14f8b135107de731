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
#include <span>
#include <string>
#include <vector>

#include "ebf/nn.hpp"

namespace ebf {

// Token inventory: 0 = <blank>, 1 = <pad>, then regular tokens, and
// <sos/eos> last.
struct Vocabulary {
  std::vector<std::string> tokens;

  static Vocabulary with_regular(const std::vector<std::string>& regular);
  static Vocabulary toy(int num_regular);

  std::int64_t size() const { return static_cast<std::int64_t>(tokens.size()); }
  std::int64_t blank() const { return 0; }
  std::int64_t pad() const { return 1; }
  std::int64_t sos() const { return size() - 1; }
  std::int64_t eos() const { return size() - 1; }
  bool is_regular(std::int64_t id) const { return id >= 2 && id < size() - 1; }
  void validate() const;
};

struct DecoderConfig {
  int layers = 6;
  int d = 256;
  int heads = 0;   // 0: d / 64
  int d_ffn = 0;   // 0: 4d
  double dropout = 0.2;
  int vocab_size = 0;
  int max_positions = 512;
  bool cross_attention = true;  // false for the language model

  DecoderConfig resolved() const;
  void validate() const;
};

struct MultiHeadAttention {
  Linear linear_q, linear_k, linear_v, linear_out;
  int heads = 1;

  static MultiHeadAttention create(int d, int heads, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

// query [B, L, d], memory [B or 1, S, d]; mask broadcastable to [B, H, L, S].
Tensor attention_forward(const MultiHeadAttention& p, const Tensor& query, const Tensor& memory,
                         const Tensor& mask);

struct DecoderLayer {
  LayerNorm norm1;
  MultiHeadAttention self_attn;
  std::optional<LayerNorm> norm2;
  std::optional<MultiHeadAttention> src_attn;
  LayerNorm norm3;
  Linear w1, w2;

  static DecoderLayer create(const DecoderConfig& cfg, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

// Encoder output as seen by the decoder.
struct Memory {
  Tensor x;                           // [B or 1, S, d]
  std::vector<std::int64_t> lengths;  // one per memory row
};

class Decoder {
 public:
  Decoder() = default;
  Decoder(const DecoderConfig& cfg, Rng& rng);

  const DecoderConfig& config() const { return cfg_; }

  // ids: B rows of equal length L. Returns log-probs [B, L, V]. With
  // memory == nullptr (or disable_source_attention) every cross-attention
  // context is the zero vector.
  Tensor forward(const std::vector<std::vector<std::int64_t>>& ids, const Memory* memory,
                 bool disable_source_attention, const ForwardContext& ctx) const;

  // Next-token log-probs [V] after `tokens` (which start with sos).
  std::vector<double> step(std::span<const std::int64_t> tokens, const Memory* memory,
                           bool disable_source_attention) const;

  void collect(const std::string& prefix, ParamList& out) const;
  std::vector<DecoderLayer>& layers() { return layers_; }

 private:
  DecoderConfig cfg_;
  Tensor embed_;      // [V, d]
  Tensor positions_;  // [max_positions, d]
  std::vector<DecoderLayer> layers_;
  LayerNorm after_norm_;
  Linear output_;
};

// sum_i log P_ilm(y_i | y_<i) over tokens[1..], source attention disabled.
// tokens starts with sos and normally ends with eos.
double ilm_estimate(const Decoder& decoder, std::span<const std::int64_t> tokens);

}  // namespace ebf
