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

#include "ebf/nn.hpp"

#include <algorithm>
#include <cmath>

namespace ebf {

void register_param(ParamList& out, std::string name, Tensor t) {
  if (!t.defined()) return;
  t.set_requires_grad(true);
  out.push_back({std::move(name), std::move(t)});
}

Tensor trainable_zeros(Shape shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

Tensor xavier_uniform(Shape shape, std::int64_t fan_in, std::int64_t fan_out, Rng& rng) {
  Tensor t(std::move(shape));
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.data_mut()) v = (2.0 * rng.uniform() - 1.0) * a;
  t.set_requires_grad(true);
  return t;
}

Linear Linear::create(std::int64_t in, std::int64_t out, bool with_bias, Rng& rng) {
  Linear l;
  l.weight = xavier_uniform({in, out}, in, out, rng);
  if (with_bias) l.bias = trainable_zeros({out});
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add(y, bias) : y;
}

void Linear::collect(const std::string& prefix, ParamList& out) const {
  register_param(out, prefix + ".weight", weight);
  register_param(out, prefix + ".bias", bias);
}

LayerNorm LayerNorm::create(std::int64_t d) {
  Tensor gain = Tensor::ones({d});
  gain.set_requires_grad(true);
  return LayerNorm{gain, trainable_zeros({d})};
}

void LayerNorm::collect(const std::string& prefix, ParamList& out) const {
  register_param(out, prefix + ".gain", gain);
  register_param(out, prefix + ".bias", bias);
}

DepthwiseConv DepthwiseConv::create(std::int64_t channels, std::int64_t kernel_size, Rng& rng) {
  check(kernel_size % 2 == 1, Errc::kConfig,
        "depthwise kernel size must be odd, got " + std::to_string(kernel_size));
  // Each output channel sees one input channel: fan_in = fan_out = k.
  return DepthwiseConv{xavier_uniform({channels, kernel_size}, kernel_size, kernel_size, rng),
                       trainable_zeros({channels})};
}

void DepthwiseConv::collect(const std::string& prefix, ParamList& out) const {
  register_param(out, prefix + ".kernel", kernel);
  register_param(out, prefix + ".bias", bias);
}

PaddedBatch pad_batch(const std::vector<Tensor>& rows) {
  check(!rows.empty(), Errc::kShape, "pad_batch of zero rows");
  const std::int64_t feat = rows[0].dim(-1);
  std::int64_t t_max = 0;
  for (const auto& r : rows) {
    check(r.rank() == 2 && r.dim(1) == feat, Errc::kShape, "pad_batch: row shape mismatch");
    t_max = std::max(t_max, r.dim(0));
  }
  const auto batch = static_cast<std::int64_t>(rows.size());
  std::vector<double> data(static_cast<std::size_t>(batch * t_max * feat), 0.0);
  PaddedBatch out;
  for (std::int64_t b = 0; b < batch; ++b) {
    const auto& r = rows[static_cast<std::size_t>(b)];
    std::copy(r.data().begin(), r.data().end(), data.begin() + b * t_max * feat);
    out.lengths.push_back(r.dim(0));
  }
  out.x = Tensor({batch, t_max, feat}, std::move(data));
  return out;
}

}  // namespace ebf
