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

#include "ebf/ops.hpp"
#include "ebf/rng.hpp"
#include "ebf/tensor.hpp"

namespace ebf {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedTensor>;

// Marks `t` trainable and appends it under `name`.
void register_param(ParamList& out, std::string name, Tensor t);

// Both return tensors with requires_grad set.
Tensor trainable_zeros(Shape shape);
// U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(Shape shape, std::int64_t fan_in, std::int64_t fan_out, Rng& rng);

struct ForwardHooks;

// Per-call forward state. Training mode enables dropout and layer drop and
// then requires `rng`.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
  const ForwardHooks* hooks = nullptr;
};

inline Tensor apply_dropout(const Tensor& x, double rate, const ForwardContext& ctx) {
  return dropout(x, rate, ctx.training, ctx.rng);
}

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]; undefined when bias-free

  static Linear create(std::int64_t in, std::int64_t out, bool with_bias, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  static LayerNorm create(std::int64_t d);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
  void collect(const std::string& prefix, ParamList& out) const;
};

struct DepthwiseConv {
  Tensor kernel;  // [c, k]
  Tensor bias;    // [c]

  static DepthwiseConv create(std::int64_t channels, std::int64_t kernel_size, Rng& rng);
  Tensor operator()(const Tensor& x) const { return depthwise_conv1d(x, kernel, bias); }
  void collect(const std::string& prefix, ParamList& out) const;
};

// Padded batch of sequences; frame t of row b is valid iff t < lengths[b].
struct PaddedBatch {
  Tensor x;  // [B, T, feat]
  std::vector<std::int64_t> lengths;

  std::int64_t batch() const { return x.dim(0); }
  std::int64_t time() const { return x.dim(1); }
  bool valid(std::int64_t b, std::int64_t t) const { return t < lengths[static_cast<std::size_t>(b)]; }
};

// Stacks [T_i, feat] rows into a zero-padded batch.
PaddedBatch pad_batch(const std::vector<Tensor>& rows);

}  // namespace ebf
