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

#include "ebf/gradcheck.hpp"

#include <cmath>

#include "ebf/ctc.hpp"
#include "ebf/decoder.hpp"
#include "ebf/ops.hpp"
#include "ebf/training.hpp"

namespace ebf {

GradcheckResult gradcheck(const std::string& name, const std::function<Tensor()>& loss_fn, ParamList leaves,
                          const GradcheckOptions& opts) {
  GradcheckResult res;
  res.name = name;
  for (auto& l : leaves) {
    l.tensor.set_requires_grad(true);
    l.tensor.zero_grad();
  }
  {
    const Tensor loss = loss_fn();
    loss.backward();
  }
  // A leaf whose true gradient vanishes (e.g. attention key biases, by
  // softmax shift invariance) only shows finite-difference roundoff; its
  // error is measured against the global gradient scale instead.
  double global = 0.0;
  for (const auto& l : leaves)
    if (l.tensor.has_grad())
      for (double g : l.tensor.grad()) global += g * g;
  const double floor = 1e-6 * std::max(1.0, std::sqrt(global));
  NoGradGuard guard;
  for (auto& l : leaves) {
    auto data = l.tensor.data_mut();
    const std::vector<double> analytic =
        l.tensor.has_grad() ? std::vector<double>(l.tensor.grad().begin(), l.tensor.grad().end())
                            : std::vector<double>(data.size(), 0.0);
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double v = data[i];
      data[i] = v + opts.h;
      const double fp = loss_fn().item();
      data[i] = v - opts.h;
      const double fm = loss_fn().item();
      data[i] = v;
      const double numeric = (fp - fm) / (2.0 * opts.h);
      diff += (analytic[i] - numeric) * (analytic[i] - numeric);
      na += analytic[i] * analytic[i];
      nn += numeric * numeric;
    }
    res.elements += static_cast<std::int64_t>(data.size());
    const double rel = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), floor});
    if (rel >= res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst_param = l.name;
    }
  }
  res.passed = std::isfinite(res.max_rel_error) && res.max_rel_error <= opts.tolerance;
  return res;
}

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data_mut()) v = scale * rng.normal();
  return t;
}

// Values bounded away from zero, for the relu kink.
Tensor away_from_zero(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data_mut()) {
    const double u = 0.2 + rng.uniform();
    v = rng.bernoulli(0.5) ? u : -u;
  }
  return t;
}

// sum(out * R) / sqrt(N) with a fixed random R keeps |f| O(1).
struct Projector {
  std::vector<Tensor> weights;
  Rng rng;
  explicit Projector(std::uint64_t seed) : rng(seed) {}
  Tensor operator()(const Tensor& out, std::size_t slot = 0) {
    if (weights.size() <= slot) weights.resize(slot + 1);
    if (!weights[slot].defined() || weights[slot].shape() != out.shape())
      weights[slot] = random_tensor(out.shape(), rng);
    return scale(sum(mul(out, weights[slot])), 1.0 / std::sqrt(static_cast<double>(out.numel())));
  }
};

// LayerNorm gains/biases and zero-initialized biases are perturbed so that
// the check does not sit on a special point.
void jitter(ParamList& params, Rng& rng) {
  for (auto& p : params)
    for (auto& v : p.tensor.data_mut()) v += 0.1 * rng.normal();
}

EncoderConfig small_config(const EncoderConfig& base) {
  EncoderConfig c = base;
  c.d = 16;
  c.heads = 2;
  c.d_inter_cgmlp = 32;
  c.d_ffn = 24;
  c.se_bottleneck = 4;
  c.num_layers = 1;
  c.input_dim = 16;
  c.dropout = 0.0;
  c.layer_dropout = 0.0;
  return c.resolved();
}

}  // namespace

std::vector<GradcheckResult> run_gradcheck_suite(const EncoderConfig& base, const GradcheckOptions& opts) {
  std::vector<GradcheckResult> out;
  Rng rng(opts.seed * 7919 + 17);
  Projector proj(opts.seed + 1);
  const std::vector<std::int64_t> lengths{5, 3};
  const std::int64_t T = 5;
  auto run = [&](const std::string& name, const std::function<Tensor()>& f, ParamList leaves) {
    out.push_back(gradcheck(name, f, std::move(leaves), opts));
  };

  // ---- primitives
  {
    Tensor a = random_tensor({4, 5}, rng), b = random_tensor({5, 3}, rng);
    run("matmul", [&] { return proj(matmul(a, b)); }, {{"a", a}, {"b", b}});
    Tensor ba = random_tensor({2, 3, 4}, rng), bb = random_tensor({1, 4, 2}, rng);
    run("matmul_batched", [&] { return proj(matmul(ba, bb)); }, {{"a", ba}, {"b", bb}});
  }
  {
    Tensor a = random_tensor({2, 3, 4}, rng), b = random_tensor({3, 1}, rng);
    run("add_mul_broadcast", [&] { return proj(add(mul(a, b), b)); }, {{"a", a}, {"b", b}});
  }
  {
    Tensor x = random_tensor({3, 8}, rng), g = random_tensor({8}, rng), bias = random_tensor({8}, rng);
    run("layer_norm", [&] { return proj(layer_norm(x, g, bias)); }, {{"x", x}, {"gain", g}, {"bias", bias}});
  }
  {
    Tensor x = random_tensor({2, 2, 3, 5}, rng);
    const Tensor mask = key_mask(lengths, 5);
    run("softmax_masked", [&] { return proj(softmax(x, mask)); }, {{"x", x}});
    Tensor y = random_tensor({3, 6}, rng);
    run("log_softmax", [&] { return proj(log_softmax(y)); }, {{"x", y}});
  }
  {
    Tensor x = away_from_zero({100}, rng);
    run("gelu", [&] { return proj(gelu(x)); }, {{"x", x}});
    run("swish", [&] { return proj(swish(x)); }, {{"x", x}});
    run("sigmoid", [&] { return proj(sigmoid(x)); }, {{"x", x}});
    run("relu", [&] { return proj(relu(x)); }, {{"x", x}});
  }
  {
    Tensor x = random_tensor({7, 3}, rng), k = random_tensor({3, 5}, rng), bias = random_tensor({3}, rng);
    run("depthwise_conv1d", [&] { return proj(depthwise_conv1d(x, k, bias)); }, {{"x", x}, {"kernel", k}, {"bias", bias}});
  }
  {
    Tensor x = random_tensor({1, 2, 9, 7}, rng), k = random_tensor({3, 2, 3, 3}, rng), bias = random_tensor({3}, rng);
    run("conv2d", [&] { return proj(conv2d(x, k, bias, 2)); }, {{"x", x}, {"kernel", k}, {"bias", bias}});
  }
  {
    Tensor x = random_tensor({2, 5, 4}, rng);
    run("reduce_mean_time", [&] { return proj(reduce_mean_time(x, lengths)); }, {{"x", x}});
    run("mask_frames", [&] { return proj(mask_frames(x, lengths)); }, {{"x", x}});
    run("shape_ops", [&] {
      Tensor t = transpose(x, 0, 2);
      t = reshape(t, {4, -1});
      return proj(concat({slice(t, 1, 2, 5), t}, 1));
    }, {{"x", x}});
  }
  {
    Tensor x = random_tensor({2, 4, 7}, rng);
    run("rel_shift", [&] { return proj(rel_shift(x)); }, {{"x", x}});
    Tensor table = random_tensor({6, 3}, rng);
    const std::vector<std::int64_t> ids{1, 4, 1, 0};
    run("embedding", [&] { return proj(embedding(table, ids)); }, {{"table", table}});
  }
  {
    Tensor x = random_tensor({4, 6}, rng);
    run("dropout_train", [&] {
      Rng r(99);
      return proj(dropout(x, 0.3, true, &r));
    }, {{"x", x}});
  }

  // ---- composites
  const EncoderConfig cfg = small_config(base);
  const std::int64_t d = cfg.d;
  const ForwardContext eval{};
  Tensor x = random_tensor({2, T, d}, rng);
  auto with_x = [&](ParamList p) {
    p.push_back({"x", x});
    return p;
  };
  {
    Cgmlp p = Cgmlp::create(static_cast<int>(d), cfg.d_inter_cgmlp, cfg.cgmlp_kernel, rng);
    ParamList ps;
    p.collect("cgmlp", ps);
    jitter(ps, rng);
    run("cgmlp", [&] { return proj(cgmlp_branch(p, x, lengths, 0.0, eval)); }, with_x(ps));
  }
  {
    RelPosAttention p = RelPosAttention::create(static_cast<int>(d), cfg.heads, rng);
    ParamList ps;
    p.collect("mhsa", ps);
    jitter(ps, rng);
    run("relpos_mhsa", [&] { return proj(global_branch(p, x, lengths, 0.0, eval)); }, with_x(ps));
  }
  {
    ConvModule p = ConvModule::create(static_cast<int>(d), cfg.conv_module_kernel, rng);
    ParamList ps;
    p.collect("conv_module", ps);
    jitter(ps, rng);
    run("conv_module", [&] { return proj(conv_module_forward(p, x, lengths, 0.0, eval)); }, with_x(ps));
  }
  {
    FeedForward p = FeedForward::create(static_cast<int>(d), cfg.d_ffn, rng);
    ParamList ps;
    p.collect("ffn", ps);
    jitter(ps, rng);
    run("ffn", [&] { return proj(ffn_forward(p, x, 0.0, eval)); }, with_x(ps));
  }
  for (auto kind : {MergeKind::kConcatProj, MergeKind::kWeightedAverage, MergeKind::kDepthConv,
                    MergeKind::kMultiKernel, MergeKind::kDepthConvSE, MergeKind::kConvModuleInternal,
                    MergeKind::kConvModuleExternal}) {
    EncoderConfig mc = cfg;
    mc.merge.kind = kind;
    mc.merge.global_weight = 0.7;
    mc.merge.local_weight = 0.4;
    MergeModule p = MergeModule::create(mc, rng);
    ParamList ps;
    p.collect("merge", ps);
    jitter(ps, rng);
    Tensor yg = random_tensor({2, T, d}, rng), yl = random_tensor({2, T, d}, rng);
    ps.push_back({"y_global", yg});
    ps.push_back({"y_local", yl});
    run("merge_" + std::string(to_string(kind)),
        [&] { return proj(merge_forward(p, yg, yl, lengths, 0.0, eval)); }, ps);
  }
  {
    EncoderConfig bc = cfg;
    bc.ffn_style = FfnStyle::kMacaron;
    bc.dropout = 0.1;
    EncoderBlock p = EncoderBlock::create(bc, rng);
    ParamList ps;
    p.collect("block", ps);
    jitter(ps, rng);
    run("ebranchformer_block", [&] { return proj(block_forward(p, bc, x, lengths, eval)); }, with_x(ps));
    // Train mode: dropout masks replay from a fixed seed.
    run("ebranchformer_block_dropout", [&] {
      Rng r(5);
      return proj(block_forward(p, bc, x, lengths, ForwardContext{true, &r, nullptr}));
    }, with_x(ps));
  }
  {
    EncoderConfig bc = cfg;
    bc.block_type = BlockType::kConformer;
    EncoderBlock p = EncoderBlock::create(bc, rng);
    ParamList ps;
    p.collect("conformer", ps);
    jitter(ps, rng);
    run("conformer_block", [&] { return proj(block_forward(p, bc, x, lengths, eval)); }, with_x(ps));
  }
  {
    ConvSubsample p = ConvSubsample::create(cfg.input_dim, 4, rng);
    ParamList ps;
    p.collect("embed", ps);
    jitter(ps, rng);
    Tensor feats = random_tensor({1, 11, cfg.input_dim}, rng);
    const std::vector<std::int64_t> flen{11};
    ps.push_back({"features", feats});
    run("conv_subsample", [&] { return proj(conv_subsample(p, feats, flen, nullptr)); }, ps);
  }
  {
    Tensor logits = random_tensor({6, 3}, rng);
    const std::vector<std::int64_t> target{1, 2, 2};
    run("ctc_loss", [&] { return ctc_loss(log_softmax(logits), target).loss; }, {{"logits", logits}});
    Tensor blogits = random_tensor({2, 6, 4}, rng);
    const std::vector<std::int64_t> blen{6, 4};
    const std::vector<std::vector<std::int64_t>> btarget{{1, 3}, {2}};
    run("ctc_loss_batch", [&] { return ctc_loss_batch(log_softmax(blogits), blen, btarget); }, {{"logits", blogits}});
  }
  {
    Tensor logits = random_tensor({4, 5}, rng);
    const std::vector<std::int64_t> target{1, kIgnoreTarget, 4, 0};
    run("label_smoothed_ce", [&] { return label_smoothed_ce(log_softmax(logits), target, 0.1); }, {{"logits", logits}});
  }
  {
    DecoderConfig dc;
    dc.layers = 1;
    dc.d = static_cast<int>(d);
    dc.heads = 2;
    dc.d_ffn = 24;
    dc.dropout = 0.0;
    dc.vocab_size = 6;
    dc.max_positions = 8;
    Decoder dec(dc, rng);
    ParamList ps;
    dec.collect("decoder", ps);
    jitter(ps, rng);
    Tensor mem = random_tensor({1, T, d}, rng);
    ps.push_back({"memory", mem});
    const std::vector<std::vector<std::int64_t>> ids{{5, 2, 3}};
    run("decoder_step", [&] {
      const Memory m{mem, {4}};
      return proj(slice(dec.forward(ids, &m, false, eval), 1, 2, 1), 1);
    }, ps);
  }
  return out;
}

}  // namespace ebf
