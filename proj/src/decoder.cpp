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

#include "ebf/decoder.hpp"

#include <cmath>
#include <string_view>
#include <unordered_set>

#include "ebf/ops.hpp"

namespace ebf {

Vocabulary Vocabulary::with_regular(const std::vector<std::string>& regular) {
  Vocabulary v;
  v.tokens = {"<blank>", "<pad>"};
  v.tokens.insert(v.tokens.end(), regular.begin(), regular.end());
  v.tokens.push_back("<sos/eos>");
  v.validate();
  return v;
}

Vocabulary Vocabulary::toy(int num_regular) {
  std::vector<std::string> regular;
  for (int i = 0; i < num_regular; ++i) regular.push_back("t" + std::to_string(i));
  return with_regular(regular);
}

void Vocabulary::validate() const {
  check(tokens.size() >= 4, Errc::kConfig, "vocabulary needs blank, pad, sos/eos and >= 1 regular token");
  check(tokens[0] == "<blank>" && tokens[1] == "<pad>" && tokens.back() == "<sos/eos>", Errc::kConfig,
        "vocabulary must be [<blank>, <pad>, ..., <sos/eos>]");
  std::unordered_set<std::string_view> seen;
  for (const auto& t : tokens)
    if (!seen.insert(t).second) fail(Errc::kConfig, "duplicate token '" + t + "'");
}

DecoderConfig DecoderConfig::resolved() const {
  DecoderConfig r = *this;
  if (r.heads == 0) r.heads = r.d / 64;
  if (r.d_ffn == 0) r.d_ffn = 4 * r.d;
  return r;
}

void DecoderConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) { check(ok, Errc::kConfig, "decoder: " + msg); };
  need(layers >= 0 && d >= 1 && d_ffn >= 1, "layers, d, d_ffn must be positive");
  need(heads >= 1 && d % heads == 0, "d must be divisible by heads (d/64 default needs d >= 64)");
  need(vocab_size >= 4, "vocab_size must be >= 4");
  need(max_positions >= 2, "max_positions must be >= 2");
  need(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
}

MultiHeadAttention MultiHeadAttention::create(int d, int heads, Rng& rng) {
  MultiHeadAttention a;
  a.heads = heads;
  a.linear_q = Linear::create(d, d, true, rng);
  a.linear_k = Linear::create(d, d, true, rng);
  a.linear_v = Linear::create(d, d, true, rng);
  a.linear_out = Linear::create(d, d, true, rng);
  return a;
}

void MultiHeadAttention::collect(const std::string& prefix, ParamList& out) const {
  linear_q.collect(prefix + ".linear_q", out);
  linear_k.collect(prefix + ".linear_k", out);
  linear_v.collect(prefix + ".linear_v", out);
  linear_out.collect(prefix + ".linear_out", out);
}

Tensor attention_forward(const MultiHeadAttention& p, const Tensor& query, const Tensor& memory,
                         const Tensor& mask) {
  const std::int64_t d = query.dim(-1), heads = p.heads, dk = d / heads;
  auto split = [&](const Tensor& t) {
    return transpose(reshape(t, {t.dim(0), t.dim(1), heads, dk}), 1, 2);
  };
  const Tensor q = split(p.linear_q(query));
  const Tensor k = split(p.linear_k(memory));
  const Tensor v = split(p.linear_v(memory));
  const Tensor scores = scale(matmul(q, transpose(k, -1, -2)), 1.0 / std::sqrt(static_cast<double>(dk)));
  const Tensor ctx = transpose(matmul(softmax(scores, mask), v), 1, 2);
  return p.linear_out(reshape(ctx, {query.dim(0), query.dim(1), d}));
}

DecoderLayer DecoderLayer::create(const DecoderConfig& cfg, Rng& rng) {
  DecoderLayer l;
  l.norm1 = LayerNorm::create(cfg.d);
  l.self_attn = MultiHeadAttention::create(cfg.d, cfg.heads, rng);
  if (cfg.cross_attention) {
    l.norm2 = LayerNorm::create(cfg.d);
    l.src_attn = MultiHeadAttention::create(cfg.d, cfg.heads, rng);
  }
  l.norm3 = LayerNorm::create(cfg.d);
  l.w1 = Linear::create(cfg.d, cfg.d_ffn, true, rng);
  l.w2 = Linear::create(cfg.d_ffn, cfg.d, true, rng);
  return l;
}

void DecoderLayer::collect(const std::string& prefix, ParamList& out) const {
  norm1.collect(prefix + ".norm1", out);
  self_attn.collect(prefix + ".self_attn", out);
  if (src_attn) {
    norm2->collect(prefix + ".norm2", out);
    src_attn->collect(prefix + ".src_attn", out);
  }
  norm3.collect(prefix + ".norm3", out);
  w1.collect(prefix + ".w1", out);
  w2.collect(prefix + ".w2", out);
}

Decoder::Decoder(const DecoderConfig& cfg, Rng& rng) : cfg_(cfg.resolved()) {
  cfg_.validate();
  embed_ = xavier_uniform({cfg_.vocab_size, cfg_.d}, cfg_.vocab_size, cfg_.d, rng);
  positions_ = xavier_uniform({cfg_.max_positions, cfg_.d}, cfg_.max_positions, cfg_.d, rng);
  for (int i = 0; i < cfg_.layers; ++i) layers_.push_back(DecoderLayer::create(cfg_, rng));
  after_norm_ = LayerNorm::create(cfg_.d);
  output_ = Linear::create(cfg_.d, cfg_.vocab_size, true, rng);
}

Tensor Decoder::forward(const std::vector<std::vector<std::int64_t>>& ids, const Memory* memory,
                        bool disable_source_attention, const ForwardContext& ctx) const {
  check(!ids.empty() && !ids[0].empty(), Errc::kShape, "decoder: empty token batch");
  const auto batch = static_cast<std::int64_t>(ids.size());
  const auto len = static_cast<std::int64_t>(ids[0].size());
  check(len <= cfg_.max_positions, Errc::kValue,
        "decoder: sequence of " + std::to_string(len) + " exceeds max_positions");
  std::vector<std::int64_t> flat;
  flat.reserve(static_cast<std::size_t>(batch * len));
  for (const auto& row : ids) {
    check(static_cast<std::int64_t>(row.size()) == len, Errc::kShape, "decoder: ragged token batch");
    for (auto t : row) {
      check(t >= 0 && t < cfg_.vocab_size, Errc::kValue, "decoder: token id " + std::to_string(t) + " out of range");
      flat.push_back(t);
    }
  }
  Tensor x = reshape(embedding(embed_, flat), {batch, len, cfg_.d});
  x = add(x, slice(positions_, 0, 0, len));
  x = apply_dropout(x, cfg_.dropout, ctx);

  std::vector<double> causal(static_cast<std::size_t>(len * len), 0.0);
  for (std::int64_t i = 0; i < len; ++i)
    for (std::int64_t j = 0; j <= i; ++j) causal[i * len + j] = 1.0;
  const Tensor self_mask({1, 1, len, len}, std::move(causal));

  const bool use_source = memory != nullptr && !disable_source_attention;
  Tensor src_mask;
  if (use_source) src_mask = key_mask(memory->lengths, memory->x.dim(1));

  for (const auto& layer : layers_) {
    Tensor h = layer.norm1(x);
    x = add(x, apply_dropout(attention_forward(layer.self_attn, h, h, self_mask), cfg_.dropout, ctx));
    if (layer.src_attn) {
      Tensor src;
      if (use_source) {
        src = attention_forward(*layer.src_attn, (*layer.norm2)(x), memory->x, src_mask);
      } else {
        // Every source key masked: the attention context is zero and only
        // the output projection's bias survives.
        src = layer.src_attn->linear_out(Tensor::zeros({batch, len, cfg_.d}));
      }
      x = add(x, apply_dropout(src, cfg_.dropout, ctx));
    }
    h = apply_dropout(relu(layer.w1(layer.norm3(x))), cfg_.dropout, ctx);
    x = add(x, apply_dropout(layer.w2(h), cfg_.dropout, ctx));
  }
  return log_softmax(output_(after_norm_(x)));
}

std::vector<double> Decoder::step(std::span<const std::int64_t> tokens, const Memory* memory,
                                  bool disable_source_attention) const {
  NoGradGuard guard;
  const std::vector<std::vector<std::int64_t>> ids{std::vector<std::int64_t>(tokens.begin(), tokens.end())};
  const Tensor lp = forward(ids, memory, disable_source_attention, {});
  const std::int64_t len = lp.dim(1), vocab = lp.dim(2);
  const auto d = lp.data();
  return std::vector<double>(d.begin() + (len - 1) * vocab, d.begin() + len * vocab);
}

void Decoder::collect(const std::string& prefix, ParamList& out) const {
  register_param(out, prefix + ".embed", embed_);
  register_param(out, prefix + ".positions", positions_);
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect(prefix + ".layers." + std::to_string(i), out);
  after_norm_.collect(prefix + ".after_norm", out);
  output_.collect(prefix + ".output", out);
}

double ilm_estimate(const Decoder& decoder, std::span<const std::int64_t> tokens) {
  check(tokens.size() >= 2, Errc::kValue, "ilm_estimate needs sos plus at least one token");
  NoGradGuard guard;
  const std::vector<std::vector<std::int64_t>> ids{std::vector<std::int64_t>(tokens.begin(), tokens.end() - 1)};
  const Tensor lp = decoder.forward(ids, nullptr, true, {});
  const std::int64_t vocab = lp.dim(2);
  double total = 0.0;
  for (std::size_t i = 1; i < tokens.size(); ++i) total += lp.data()[(i - 1) * vocab + tokens[i]];
  return total;
}

}  // namespace ebf
