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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "ebf/encoder.hpp"
#include "ebf/ops.hpp"
#include "ebf/rng.hpp"
#include "ebf/tensor.hpp"

namespace ebf::testing {

inline Tensor randn(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data_mut()) v = scale * rng.normal();
  return t;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}
inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  return max_abs_diff(a.data(), b.data());
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), sizeof(double) * a.data().size()) == 0;
}

// Small encoder shape used across tests; dropout off.
inline EncoderConfig small_encoder(int d = 16, int layers = 2) {
  EncoderConfig c;
  c.input_dim = 20;
  c.d = d;
  c.num_layers = layers;
  c.heads = 2;
  c.d_inter_cgmlp = 2 * d;
  c.d_ffn = 2 * d;
  c.cgmlp_kernel = 5;
  c.merge_kernel = 5;
  c.merge_kernel_secondary = 3;
  c.conv_module_kernel = 5;
  c.se_bottleneck = 4;
  c.dropout = 0.0;
  c.layer_dropout = 0.0;
  return c.resolved();
}

// Gaussian jitter so zero-initialized biases and unit gains are exercised.
inline void jitter(const ParamList& params, Rng& rng, double scale = 0.1) {
  for (const auto& p : params)
    for (auto& v : const_cast<Tensor&>(p.tensor).data_mut()) v += scale * rng.normal();
}

}  // namespace ebf::testing
