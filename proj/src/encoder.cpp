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

#include "ebf/encoder.hpp"

#include <cmath>

namespace ebf {
namespace {

std::string idx(const std::string& prefix, std::size_t i) {
  return prefix + "." + std::to_string(i);
}

}  // namespace

std::string_view to_string(MergeKind kind) {
  switch (kind) {
    case MergeKind::kConcatProj: return "concat_proj";
    case MergeKind::kWeightedAverage: return "weighted_average";
    case MergeKind::kDepthConv: return "depth_conv";
    case MergeKind::kMultiKernel: return "multi_kernel";
    case MergeKind::kDepthConvSE: return "depth_conv_se";
    case MergeKind::kConvModuleInternal: return "conv_module_internal";
    case MergeKind::kConvModuleExternal: return "conv_module_external";
  }
  return "?";
}

std::string_view to_string(FfnStyle style) {
  switch (style) {
    case FfnStyle::kNone: return "none";
    case FfnStyle::kSingle: return "single";
    case FfnStyle::kMacaron: return "macaron";
  }
  return "?";
}

std::string_view to_string(BlockType type) {
  return type == BlockType::kConformer ? "conformer" : "ebranchformer";
}

MergeKind parse_merge_kind(std::string_view name) {
  for (auto k : {MergeKind::kConcatProj, MergeKind::kWeightedAverage, MergeKind::kDepthConv,
                 MergeKind::kMultiKernel, MergeKind::kDepthConvSE, MergeKind::kConvModuleInternal,
                 MergeKind::kConvModuleExternal}) {
    if (to_string(k) == name) return k;
  }
  fail(Errc::kConfig, "unknown merge variant '" + std::string(name) + "'");
}

FfnStyle parse_ffn_style(std::string_view name) {
  for (auto s : {FfnStyle::kNone, FfnStyle::kSingle, FfnStyle::kMacaron}) {
    if (to_string(s) == name) return s;
  }
  fail(Errc::kConfig, "unknown ffn style '" + std::string(name) + "'");
}

BlockType parse_block_type(std::string_view name) {
  for (auto t : {BlockType::kEBranchformer, BlockType::kConformer}) {
    if (to_string(t) == name) return t;
  }
  fail(Errc::kConfig, "unknown block type '" + std::string(name) + "'");
}

EncoderConfig EncoderConfig::resolved() const {
  EncoderConfig r = *this;
  if (r.heads == 0) r.heads = r.d / 64;
  if (r.d_inter_cgmlp == 0) r.d_inter_cgmlp = 6 * r.d;
  if (r.d_ffn == 0) r.d_ffn = 4 * r.d;
  if (r.se_bottleneck == 0) r.se_bottleneck = (2 * r.d) / 8;
  return r;
}

void EncoderConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) { check(ok, Errc::kConfig, "encoder: " + msg); };
  need(input_dim >= 7, "input_dim must be >= 7");
  need(d >= 1 && num_layers >= 0, "d must be positive and num_layers non-negative");
  need(heads >= 1, "heads must be >= 1 (d/64 default needs d >= 64)");
  need(d % heads == 0, "d must be divisible by heads");
  need(d_inter_cgmlp >= 2 && d_inter_cgmlp % 2 == 0, "d_inter_cgmlp must be even");
  need(d_ffn >= 1, "d_ffn must be positive");
  need(se_bottleneck >= 1, "se_bottleneck must be positive");
  for (int k : {cgmlp_kernel, merge_kernel, merge_kernel_secondary, conv_module_kernel}) {
    need(k >= 1 && k % 2 == 1, "kernel sizes must be odd, got " + std::to_string(k));
  }
  need(std::isfinite(merge.global_weight) && std::isfinite(merge.local_weight),
       "weighted-average weights must be finite");
  need(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
  need(layer_dropout >= 0.0 && layer_dropout < 1.0, "layer_dropout must be in [0, 1)");
}

// ---------------------------------------------------------------- creation

RelPosAttention RelPosAttention::create(int d, int heads, Rng& rng) {
  RelPosAttention a;
  a.heads = heads;
  a.norm = LayerNorm::create(d);
  a.linear_q = Linear::create(d, d, true, rng);
  a.linear_k = Linear::create(d, d, true, rng);
  a.linear_v = Linear::create(d, d, true, rng);
  a.linear_out = Linear::create(d, d, true, rng);
  a.linear_pos = Linear::create(d, d, false, rng);
  const int dk = d / heads;
  a.pos_bias_u = xavier_uniform({heads, dk}, dk, heads, rng);
  a.pos_bias_v = xavier_uniform({heads, dk}, dk, heads, rng);
  return a;
}

void RelPosAttention::collect(const std::string& prefix, ParamList& out) const {
  norm.collect(prefix + ".norm", out);
  linear_q.collect(prefix + ".linear_q", out);
  linear_k.collect(prefix + ".linear_k", out);
  linear_v.collect(prefix + ".linear_v", out);
  linear_out.collect(prefix + ".linear_out", out);
  linear_pos.collect(prefix + ".linear_pos", out);
  register_param(out, prefix + ".pos_bias_u", pos_bias_u);
  register_param(out, prefix + ".pos_bias_v", pos_bias_v);
}

Cgmlp Cgmlp::create(int d, int d_inter, int kernel, Rng& rng) {
  Cgmlp c;
  c.norm = LayerNorm::create(d);
  c.proj_in = Linear::create(d, d_inter, true, rng);
  c.csgu_norm = LayerNorm::create(d_inter / 2);
  c.conv = DepthwiseConv::create(d_inter / 2, kernel, rng);
  c.proj_out = Linear::create(d_inter / 2, d, true, rng);
  return c;
}

void Cgmlp::collect(const std::string& prefix, ParamList& out) const {
  norm.collect(prefix + ".norm", out);
  proj_in.collect(prefix + ".proj_in", out);
  csgu_norm.collect(prefix + ".csgu_norm", out);
  conv.collect(prefix + ".conv", out);
  proj_out.collect(prefix + ".proj_out", out);
}

ConvModule ConvModule::create(int channels, int kernel, Rng& rng) {
  ConvModule m;
  m.norm = LayerNorm::create(channels);
  m.pointwise_in = Linear::create(channels, 2 * channels, true, rng);
  m.depthwise = DepthwiseConv::create(channels, kernel, rng);
  m.mid_norm = LayerNorm::create(channels);
  m.pointwise_out = Linear::create(channels, channels, true, rng);
  return m;
}

void ConvModule::collect(const std::string& prefix, ParamList& out) const {
  norm.collect(prefix + ".norm", out);
  pointwise_in.collect(prefix + ".pointwise_in", out);
  depthwise.collect(prefix + ".depthwise", out);
  mid_norm.collect(prefix + ".mid_norm", out);
  pointwise_out.collect(prefix + ".pointwise_out", out);
}

FeedForward FeedForward::create(int d, int d_ffn, Rng& rng) {
  return FeedForward{LayerNorm::create(d), Linear::create(d, d_ffn, true, rng),
                     Linear::create(d_ffn, d, true, rng)};
}

void FeedForward::collect(const std::string& prefix, ParamList& out) const {
  norm.collect(prefix + ".norm", out);
  w1.collect(prefix + ".w1", out);
  w2.collect(prefix + ".w2", out);
}

MergeModule MergeModule::create(const EncoderConfig& cfg, Rng& rng) {
  MergeModule m;
  m.variant = cfg.merge;
  const int c = 2 * cfg.d;
  switch (cfg.merge.kind) {
    case MergeKind::kWeightedAverage:
      break;
    case MergeKind::kConcatProj:
    case MergeKind::kConvModuleExternal:
      m.proj = Linear::create(c, cfg.d, true, rng);
      break;
    case MergeKind::kDepthConv:
      m.conv = DepthwiseConv::create(c, cfg.merge_kernel, rng);
      m.proj = Linear::create(c, cfg.d, true, rng);
      break;
    case MergeKind::kMultiKernel:
      m.conv = DepthwiseConv::create(c, cfg.merge_kernel, rng);
      m.conv_secondary = DepthwiseConv::create(c, cfg.merge_kernel_secondary, rng);
      m.proj = Linear::create(c, cfg.d, true, rng);
      break;
    case MergeKind::kDepthConvSE:
      m.conv = DepthwiseConv::create(c, cfg.merge_kernel, rng);
      m.se.fc1 = Linear::create(c, cfg.se_bottleneck, true, rng);
      m.se.fc2 = Linear::create(cfg.se_bottleneck, c, true, rng);
      m.proj = Linear::create(c, cfg.d, true, rng);
      break;
    case MergeKind::kConvModuleInternal:
      m.conv_module = ConvModule::create(c, cfg.conv_module_kernel, rng);
      m.proj = Linear::create(c, cfg.d, true, rng);
      break;
  }
  return m;
}

void MergeModule::collect(const std::string& prefix, ParamList& out) const {
  if (conv.kernel.defined()) conv.collect(prefix + ".conv", out);
  if (conv_secondary.kernel.defined()) conv_secondary.collect(prefix + ".conv_secondary", out);
  if (se.fc1.weight.defined()) {
    se.fc1.collect(prefix + ".se.fc1", out);
    se.fc2.collect(prefix + ".se.fc2", out);
  }
  if (conv_module) conv_module->collect(prefix + ".conv_module", out);
  if (proj.weight.defined()) proj.collect(prefix + ".proj", out);
}

EncoderBlock EncoderBlock::create(const EncoderConfig& cfg, Rng& rng) {
  EncoderBlock b;
  b.type = cfg.block_type;
  const bool conformer = cfg.block_type == BlockType::kConformer;
  if (conformer || cfg.ffn_style == FfnStyle::kMacaron) b.ffn_macaron = FeedForward::create(cfg.d, cfg.d_ffn, rng);
  b.global = RelPosAttention::create(cfg.d, cfg.heads, rng);
  if (!conformer) {
    b.local = Cgmlp::create(cfg.d, cfg.d_inter_cgmlp, cfg.cgmlp_kernel, rng);
    b.merge = MergeModule::create(cfg, rng);
  }
  if (conformer || cfg.merge.kind == MergeKind::kConvModuleExternal) {
    b.conv_module = ConvModule::create(cfg.d, cfg.conv_module_kernel, rng);
  }
  if (conformer || cfg.ffn_style != FfnStyle::kNone) b.ffn = FeedForward::create(cfg.d, cfg.d_ffn, rng);
  b.norm_final = LayerNorm::create(cfg.d);
  return b;
}

void EncoderBlock::collect(const std::string& prefix, ParamList& out) const {
  if (ffn_macaron) ffn_macaron->collect(prefix + ".ffn_macaron", out);
  global.collect(prefix + ".global", out);
  if (type == BlockType::kEBranchformer) {
    local.collect(prefix + ".local", out);
    merge.collect(prefix + ".merge", out);
  }
  if (conv_module) conv_module->collect(prefix + ".conv_module", out);
  if (ffn) ffn->collect(prefix + ".ffn", out);
  norm_final.collect(prefix + ".norm_final", out);
}

ConvSubsample ConvSubsample::create(int input_dim, int d, Rng& rng) {
  ConvSubsample s;
  s.conv1_weight = xavier_uniform({d, 1, 3, 3}, 9, 9 * d, rng);
  s.conv1_bias = trainable_zeros({d});
  s.conv2_weight = xavier_uniform({d, d, 3, 3}, 9 * d, 9 * d, rng);
  s.conv2_bias = trainable_zeros({d});
  const std::int64_t freq = subsampled_length(input_dim);
  s.out = Linear::create(d * freq, d, true, rng);
  return s;
}

void ConvSubsample::collect(const std::string& prefix, ParamList& out) const {
  register_param(out, prefix + ".conv1.weight", conv1_weight);
  register_param(out, prefix + ".conv1.bias", conv1_bias);
  register_param(out, prefix + ".conv2.weight", conv2_weight);
  register_param(out, prefix + ".conv2.bias", conv2_bias);
  this->out.collect(prefix + ".out", out);
}

// ----------------------------------------------------------------- forward

Tensor relative_position_table(std::int64_t time, std::int64_t d) {
  const std::int64_t rows = 2 * time - 1;
  std::vector<double> pe(static_cast<std::size_t>(rows * d));
  for (std::int64_t m = 0; m < rows; ++m) {
    const double pos = static_cast<double>(time - 1 - m);
    for (std::int64_t i = 0; i < d; i += 2) {
      const double freq = std::exp(-static_cast<double>(i) * std::log(10000.0) / static_cast<double>(d));
      pe[m * d + i] = std::sin(pos * freq);
      if (i + 1 < d) pe[m * d + i + 1] = std::cos(pos * freq);
    }
  }
  return Tensor({rows, d}, std::move(pe));
}

Tensor conv_subsample(const ConvSubsample& p, const Tensor& x, std::span<const std::int64_t> lengths,
                      std::vector<std::int64_t>* out_lengths) {
  check(x.rank() == 3, Errc::kShape, "conv_subsample expects [B, T, feat], got " + shape_str(x.shape()));
  const std::int64_t batch = x.dim(0), t_len = x.dim(1), feat = x.dim(2);
  check(t_len >= 7, Errc::kValue, "conv_subsample needs T >= 7 frames, got " + std::to_string(t_len));
  check(feat >= 7, Errc::kShape, "conv_subsample needs >= 7 feature bins");
  check(static_cast<std::int64_t>(lengths.size()) == batch, Errc::kShape, "conv_subsample: lengths/batch mismatch");
  if (out_lengths) {
    out_lengths->clear();
    for (auto len : lengths) {
      const std::int64_t sub = subsampled_length(len);
      check(sub >= 1, Errc::kValue,
            "utterance of " + std::to_string(len) + " frames is too short to subsample (need >= 7)");
      out_lengths->push_back(sub);
    }
  }
  Tensor h = reshape(x, {batch, 1, t_len, feat});
  h = relu(conv2d(h, p.conv1_weight, p.conv1_bias, 2));
  h = relu(conv2d(h, p.conv2_weight, p.conv2_bias, 2));
  // [B, d, T', F'] -> [B, T', d * F']
  const std::int64_t channels = h.dim(1), t_sub = h.dim(2), f_sub = h.dim(3);
  h = transpose(h, 1, 2);
  h = reshape(h, {batch, t_sub, channels * f_sub});
  return p.out(h);
}

Tensor global_branch(const RelPosAttention& p, const Tensor& x, std::span<const std::int64_t> lengths,
                     double dropout_rate, const ForwardContext& ctx) {
  const std::int64_t batch = x.dim(0), t_len = x.dim(1), d = x.dim(2);
  const std::int64_t heads = p.heads, dk = d / heads;
  const Tensor h = p.norm(x);
  auto split_heads = [&](const Tensor& t) {  // [B,T,d] -> [B,H,T,dk]
    return transpose(reshape(t, {batch, t_len, heads, dk}), 1, 2);
  };
  const Tensor q = reshape(p.linear_q(h), {batch, t_len, heads, dk});
  const Tensor k = split_heads(p.linear_k(h));
  const Tensor v = split_heads(p.linear_v(h));
  // Biases broadcast over batch and time: q + u is [B,T,H,dk].
  const Tensor q_u = transpose(add(q, p.pos_bias_u), 1, 2);
  const Tensor q_v = transpose(add(q, p.pos_bias_v), 1, 2);

  const Tensor pos = p.linear_pos(relative_position_table(t_len, d));  // [2T-1, d]
  const Tensor pos_t = transpose(reshape(pos, {2 * t_len - 1, heads, dk}), 0, 1);  // [H, 2T-1, dk]

  const Tensor ac = matmul(q_u, transpose(k, -1, -2));                // [B,H,T,T]
  const Tensor bd = rel_shift(matmul(q_v, transpose(pos_t, -1, -2)));  // [B,H,T,T]
  const Tensor scores = scale(add(ac, bd), 1.0 / std::sqrt(static_cast<double>(dk)));
  const Tensor weights = softmax(scores, key_mask(lengths, t_len));
  if (ctx.hooks && ctx.hooks->on_attention_weights) ctx.hooks->on_attention_weights(weights);
  Tensor context = transpose(matmul(weights, v), 1, 2);  // [B,T,H,dk]
  context = reshape(context, {batch, t_len, d});
  return apply_dropout(p.linear_out(context), dropout_rate, ctx);
}

Tensor cgmlp_branch(const Cgmlp& p, const Tensor& x, std::span<const std::int64_t> lengths,
                    double dropout_rate, const ForwardContext& ctx) {
  const Tensor z = gelu(p.proj_in(p.norm(x)));
  const std::int64_t half = z.dim(-1) / 2;
  check(z.dim(-1) % 2 == 0, Errc::kConfig, "cgMLP intermediate size must be even");
  const Tensor a = slice(z, -1, 0, half);
  Tensor b = slice(z, -1, half, half);
  if (!(ctx.hooks && ctx.hooks->bypass_csgu_norm)) b = p.csgu_norm(b);
  b = p.conv(mask_frames(b, lengths));
  return apply_dropout(p.proj_out(mul(a, b)), dropout_rate, ctx);
}

Tensor conv_module_forward(const ConvModule& p, const Tensor& x, std::span<const std::int64_t> lengths,
                           double dropout_rate, const ForwardContext& ctx) {
  const std::int64_t c = x.dim(-1);
  const Tensor h = p.pointwise_in(p.norm(x));
  Tensor g = mul(slice(h, -1, 0, c), sigmoid(slice(h, -1, c, c)));
  g = p.depthwise(mask_frames(g, lengths));
  g = swish(p.mid_norm(g));
  return apply_dropout(p.pointwise_out(g), dropout_rate, ctx);
}

Tensor ffn_forward(const FeedForward& p, const Tensor& x, double dropout_rate, const ForwardContext& ctx) {
  Tensor h = swish(p.w1(p.norm(x)));
  h = apply_dropout(h, dropout_rate, ctx);
  return apply_dropout(p.w2(h), dropout_rate, ctx);
}

Tensor merge_forward(const MergeModule& p, const Tensor& y_global, const Tensor& y_local,
                     std::span<const std::int64_t> lengths, double dropout_rate, const ForwardContext& ctx) {
  check(y_global.shape() == y_local.shape(), Errc::kShape,
        "merge: branch outputs differ " + shape_str(y_global.shape()) + " vs " + shape_str(y_local.shape()));
  switch (p.variant.kind) {
    case MergeKind::kWeightedAverage:
      return add(scale(y_global, p.variant.global_weight), scale(y_local, p.variant.local_weight));
    case MergeKind::kConcatProj:
    case MergeKind::kConvModuleExternal:
      return p.proj(concat({y_global, y_local}, -1));
    case MergeKind::kDepthConv: {
      const Tensor yc = concat({y_global, y_local}, -1);
      const Tensor yd = p.conv(mask_frames(yc, lengths));
      return p.proj(add(yc, yd));
    }
    case MergeKind::kMultiKernel: {
      const Tensor yc = concat({y_global, y_local}, -1);
      const Tensor masked = mask_frames(yc, lengths);
      const Tensor yd = p.conv(masked);
      const Tensor yd2 = p.conv_secondary(masked);
      return p.proj(add(add(yc, yd), yd2));
    }
    case MergeKind::kDepthConvSE: {
      const Tensor yc = concat({y_global, y_local}, -1);
      const Tensor yd = p.conv(mask_frames(yc, lengths));
      const std::int64_t batch = yd.dim(0), c = yd.dim(2);
      Tensor gate;
      if (ctx.hooks && ctx.hooks->force_unit_se_gate) {
        gate = Tensor::ones({batch, 1, c});
      } else {
        const Tensor pooled = reduce_mean_time(yd, lengths);  // [B, c]
        gate = sigmoid(p.se.fc2(swish(p.se.fc1(pooled))));
        gate = reshape(gate, {batch, 1, c});
      }
      return p.proj(add(yc, mul(yd, gate)));
    }
    case MergeKind::kConvModuleInternal: {
      const Tensor yc = concat({y_global, y_local}, -1);
      const Tensor yd = conv_module_forward(*p.conv_module, yc, lengths, dropout_rate, ctx);
      return p.proj(add(yc, yd));
    }
  }
  fail(Errc::kConfig, "unknown merge variant");
}

Tensor block_forward(const EncoderBlock& p, const EncoderConfig& cfg, const Tensor& x,
                     std::span<const std::int64_t> lengths, const ForwardContext& ctx) {
  if (ctx.training && cfg.layer_dropout > 0.0) {
    check(ctx.rng != nullptr, Errc::kConfig, "layer dropout in training mode needs an rng");
    if (ctx.rng->uniform() < cfg.layer_dropout) return x;
  }
  const double rate = cfg.dropout;
  Tensor h = x;
  if (p.ffn_macaron) h = add(h, scale(ffn_forward(*p.ffn_macaron, h, rate, ctx), 0.5));

  if (p.type == BlockType::kConformer) {
    h = add(h, global_branch(p.global, h, lengths, rate, ctx));
    h = add(h, conv_module_forward(*p.conv_module, h, lengths, rate, ctx));
    h = add(h, scale(ffn_forward(*p.ffn, h, rate, ctx), 0.5));
    return p.norm_final(h);
  }

  if (ctx.hooks && ctx.hooks->on_branch_input) {
    ctx.hooks->on_branch_input("global", h);
    ctx.hooks->on_branch_input("local", h);
  }
  const Tensor y_global = global_branch(p.global, h, lengths, rate, ctx);
  const Tensor y_local = cgmlp_branch(p.local, h, lengths, rate, ctx);
  h = add(h, apply_dropout(merge_forward(p.merge, y_global, y_local, lengths, rate, ctx), rate, ctx));
  if (p.conv_module) h = add(h, conv_module_forward(*p.conv_module, h, lengths, rate, ctx));
  if (p.ffn) {
    const double s = cfg.ffn_style == FfnStyle::kMacaron ? 0.5 : 1.0;
    h = add(h, scale(ffn_forward(*p.ffn, h, rate, ctx), s));
  }
  return p.norm_final(h);
}

Encoder::Encoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg.resolved()) {
  cfg_.validate();
  embed_ = ConvSubsample::create(cfg_.input_dim, cfg_.d, rng);
  blocks_.reserve(static_cast<std::size_t>(cfg_.num_layers));
  for (int i = 0; i < cfg_.num_layers; ++i) blocks_.push_back(EncoderBlock::create(cfg_, rng));
  after_norm_ = LayerNorm::create(cfg_.d);
}

PaddedBatch Encoder::forward(const PaddedBatch& features, const ForwardContext& ctx) const {
  check(features.x.dim(-1) == cfg_.input_dim, Errc::kShape,
        "encoder expects " + std::to_string(cfg_.input_dim) + "-dim features, got " +
            shape_str(features.x.shape()));
  PaddedBatch out;
  Tensor h = conv_subsample(embed_, features.x, features.lengths, &out.lengths);
  h = apply_dropout(h, cfg_.dropout, ctx);
  for (const auto& block : blocks_) h = block_forward(block, cfg_, h, out.lengths, ctx);
  out.x = after_norm_(h);
  return out;
}

void Encoder::collect(const std::string& prefix, ParamList& out) const {
  embed_.collect(prefix + ".embed", out);
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(idx(prefix + ".blocks", i), out);
  after_norm_.collect(prefix + ".after_norm", out);
}

}  // namespace ebf
