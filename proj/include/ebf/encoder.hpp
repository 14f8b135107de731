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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ebf/nn.hpp"

namespace ebf {

// How the global (attention) and local (cgMLP) branch outputs are fused.
enum class MergeKind {
  kConcatProj,          // concat -> linear
  kWeightedAverage,     // w_g * y_g + w_l * y_l
  kDepthConv,           // (Y_C + DwConv(Y_C)) W
  kMultiKernel,         // (Y_C + DwConv_k1(Y_C) + DwConv_k2(Y_C)) W
  kDepthConvSE,         // DwConv output gated by a squeeze-excitation MLP
  kConvModuleInternal,  // DwConv replaced by a convolution module on 2d channels
  kConvModuleExternal,  // concat-proj merge, convolution module after the merge
};

struct MergeVariant {
  MergeKind kind = MergeKind::kDepthConv;
  // Only read by kWeightedAverage. A zero weight drops that branch.
  double global_weight = 0.5;
  double local_weight = 0.5;
};

enum class FfnStyle { kNone, kSingle, kMacaron };
enum class BlockType { kEBranchformer, kConformer };

std::string_view to_string(MergeKind kind);
std::string_view to_string(FfnStyle style);
std::string_view to_string(BlockType type);
MergeKind parse_merge_kind(std::string_view name);
FfnStyle parse_ffn_style(std::string_view name);
BlockType parse_block_type(std::string_view name);

// Zero-valued derived fields are filled by resolved(): heads = d/64,
// d_inter_cgmlp = 6d, d_ffn = 4d, se_bottleneck = 2d/8.
struct EncoderConfig {
  int input_dim = 80;
  int d = 256;
  int num_layers = 16;
  int heads = 0;
  int d_inter_cgmlp = 0;
  int d_ffn = 0;
  FfnStyle ffn_style = FfnStyle::kSingle;
  MergeVariant merge;
  BlockType block_type = BlockType::kEBranchformer;
  int cgmlp_kernel = 31;
  int merge_kernel = 31;
  int merge_kernel_secondary = 3;
  int se_bottleneck = 0;
  int conv_module_kernel = 31;
  double dropout = 0.1;
  double layer_dropout = 0.1;

  EncoderConfig resolved() const;
  // Throws Errc::kConfig. Call on a resolved config.
  void validate() const;
};

// Test instrumentation; every member is optional.
struct ForwardHooks {
  // Called with "global" / "local" and the tensor each branch receives.
  std::function<void(std::string_view branch, const Tensor& input)> on_branch_input;
  // Called with the attention weights [B, H, T, T] of every global branch.
  std::function<void(const Tensor& weights)> on_attention_weights;
  bool bypass_csgu_norm = false;
  bool force_unit_se_gate = false;
};

struct RelPosAttention {
  LayerNorm norm;
  Linear linear_q, linear_k, linear_v, linear_out;
  Linear linear_pos;  // bias-free
  Tensor pos_bias_u;  // [heads, d / heads]
  Tensor pos_bias_v;
  int heads = 1;

  static RelPosAttention create(int d, int heads, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

// Sinusoidal embeddings of relative offsets T-1, ..., -(T-1): [2T-1, d].
Tensor relative_position_table(std::int64_t time, std::int64_t d);

struct Cgmlp {
  LayerNorm norm;
  Linear proj_in;   // d -> d_inter
  LayerNorm csgu_norm;
  DepthwiseConv conv;
  Linear proj_out;  // d_inter/2 -> d

  static Cgmlp create(int d, int d_inter, int kernel, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

struct ConvModule {
  LayerNorm norm;
  Linear pointwise_in;  // c -> 2c, followed by GLU
  DepthwiseConv depthwise;
  LayerNorm mid_norm;   // stands in for BatchNorm
  Linear pointwise_out;

  static ConvModule create(int channels, int kernel, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

struct FeedForward {
  LayerNorm norm;
  Linear w1, w2;

  static FeedForward create(int d, int d_ffn, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

struct SqueezeExcite {
  Linear fc1, fc2;
};

struct MergeModule {
  MergeVariant variant;
  Linear proj;
  DepthwiseConv conv;
  DepthwiseConv conv_secondary;
  SqueezeExcite se;
  std::optional<ConvModule> conv_module;

  static MergeModule create(const EncoderConfig& cfg, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

struct EncoderBlock {
  BlockType type = BlockType::kEBranchformer;
  std::optional<FeedForward> ffn_macaron;
  RelPosAttention global;
  Cgmlp local;             // E-Branchformer only
  MergeModule merge;       // E-Branchformer only
  std::optional<ConvModule> conv_module;  // external variant / Conformer
  std::optional<FeedForward> ffn;
  LayerNorm norm_final;

  static EncoderBlock create(const EncoderConfig& cfg, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

struct ConvSubsample {
  Tensor conv1_weight, conv1_bias;  // [d, 1, 3, 3]
  Tensor conv2_weight, conv2_bias;  // [d, d, 3, 3]
  Linear out;                       // d * freq' -> d

  static ConvSubsample create(int input_dim, int d, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

// Output length of two (3x3, stride 2, valid) convolutions.
constexpr std::int64_t subsampled_length(std::int64_t t) {
  return t < 7 ? 0 : ((t - 1) / 2 - 1) / 2;
}

// Sublayer forward passes. x is [B, T, c]; lengths mark valid prefixes.
Tensor conv_subsample(const ConvSubsample& p, const Tensor& x, std::span<const std::int64_t> lengths,
                      std::vector<std::int64_t>* out_lengths);
Tensor global_branch(const RelPosAttention& p, const Tensor& x, std::span<const std::int64_t> lengths,
                     double dropout_rate, const ForwardContext& ctx);
Tensor cgmlp_branch(const Cgmlp& p, const Tensor& x, std::span<const std::int64_t> lengths,
                    double dropout_rate, const ForwardContext& ctx);
Tensor conv_module_forward(const ConvModule& p, const Tensor& x, std::span<const std::int64_t> lengths,
                           double dropout_rate, const ForwardContext& ctx);
// Returns the FFN output only; the caller adds the (scaled) residual.
Tensor ffn_forward(const FeedForward& p, const Tensor& x, double dropout_rate, const ForwardContext& ctx);
Tensor merge_forward(const MergeModule& p, const Tensor& y_global, const Tensor& y_local,
                     std::span<const std::int64_t> lengths, double dropout_rate, const ForwardContext& ctx);
Tensor block_forward(const EncoderBlock& p, const EncoderConfig& cfg, const Tensor& x,
                     std::span<const std::int64_t> lengths, const ForwardContext& ctx);

class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& cfg, Rng& rng);

  const EncoderConfig& config() const { return cfg_; }
  // Features [B, T, input_dim] -> encodings [B, T', d] with subsampled lengths.
  PaddedBatch forward(const PaddedBatch& features, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParamList& out) const;

  ConvSubsample& embed() { return embed_; }
  std::vector<EncoderBlock>& blocks() { return blocks_; }
  const std::vector<EncoderBlock>& blocks() const { return blocks_; }

 private:
  EncoderConfig cfg_;
  ConvSubsample embed_;
  std::vector<EncoderBlock> blocks_;
  LayerNorm after_norm_;
};

}  // namespace ebf
