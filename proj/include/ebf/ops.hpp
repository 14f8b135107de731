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
#include <initializer_list>
#include <span>
#include <vector>

#include "ebf/rng.hpp"
#include "ebf/tensor.hpp"

// Differentiable primitives. Unless noted, shapes follow numpy broadcasting
// and every op records a backward rule when any input requires grad.
namespace ebf {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

// a[..., m, k] x b[..., k, n] -> [..., m, n]; batch dims broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& x, int axis0, int axis1);
// One entry may be -1 (inferred).
Tensor reshape(const Tensor& x, Shape shape);
Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t length);
Tensor concat(std::span<const Tensor> parts, int axis);
inline Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Normalizes over the last axis: (x - mean) / sqrt(var + eps) * gain + bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-12);

// Softmax over the last axis. `mask` (optional, 1 = keep, 0 = drop) must
// broadcast to x. Dropped entries come out exactly 0; a row with no kept
// entry is a value error.
Tensor softmax(const Tensor& x, const Tensor& mask = Tensor());
Tensor log_softmax(const Tensor& x);

// Exact erf form.
Tensor gelu(const Tensor& x);
Tensor swish(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);

// x[..., T, c] with kernel[c, k] (k odd) and optional bias[c]; "same" zero
// padding of (k-1)/2 per side, cross-correlation orientation.
Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias = Tensor());

// x[B, c_in, h, w], kernel[c_out, c_in, kh, kw], optional bias[c_out];
// valid padding: h' = (h - kh) / stride + 1.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, int stride);

// Inverted dropout. Identity (same handle) in eval mode or at rate 0.
Tensor dropout(const Tensor& x, double rate, bool training, Rng* rng);

// Mean over the valid prefix of the time axis: x[B, T, d] with lengths[B]
// -> [B, d], or x[T, d] with one length -> [d].
Tensor reduce_mean_time(const Tensor& x, std::span<const std::int64_t> lengths);

// Zeroes frames t >= lengths[b] of x[B, T, c].
Tensor mask_frames(const Tensor& x, std::span<const std::int64_t> lengths);

// Relative-position skew: x[..., T, 2T-1] whose column m holds relative
// offset (T-1-m) -> out[..., i, j] = x[..., i, T-1-i+j] (offset i-j).
Tensor rel_shift(const Tensor& x);

// Rows of table[V, d] selected by ids -> [ids.size(), d].
Tensor embedding(const Tensor& table, std::span<const std::int64_t> ids);

// Constant helpers (no grad).
// Key-validity mask [B, 1, 1, T] for attention scores.
Tensor key_mask(std::span<const std::int64_t> lengths, std::int64_t time);

}  // namespace ebf
