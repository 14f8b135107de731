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

#include "ebf/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "ebf/beam.hpp"
#include "ebf/ctc.hpp"
#include "ebf/ops.hpp"
#include "json.hpp"

namespace ebf {

Tensor label_smoothed_ce(const Tensor& logprobs, std::span<const std::int64_t> targets, double smoothing) {
  const std::int64_t vocab = logprobs.dim(-1);
  const std::int64_t rows = logprobs.numel() / vocab;
  check(static_cast<std::int64_t>(targets.size()) == rows, Errc::kShape,
        "label_smoothed_ce: " + std::to_string(targets.size()) + " targets for " + std::to_string(rows) + " rows");
  check(vocab >= 2, Errc::kShape, "label_smoothed_ce: vocabulary too small");
  const double off = smoothing / static_cast<double>(vocab - 1);
  std::vector<double> q(static_cast<std::size_t>(rows * vocab), 0.0);
  std::int64_t count = 0;
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::int64_t t = targets[r];
    if (t == kIgnoreTarget) continue;
    check(t >= 0 && t < vocab, Errc::kValue, "label_smoothed_ce: target " + std::to_string(t) + " out of range");
    std::fill(q.begin() + r * vocab, q.begin() + (r + 1) * vocab, off);
    q[r * vocab + t] = 1.0 - smoothing;
    ++count;
  }
  check(count > 0, Errc::kValue, "label_smoothed_ce: every target is padding");
  const Tensor flat = reshape(logprobs, {rows, vocab});
  return scale(sum(mul(flat, Tensor({rows, vocab}, std::move(q)))), -1.0 / static_cast<double>(count));
}

Tensor joint_loss(const Tensor& aed_loss, const Tensor& ctc_loss, double ctc_weight) {
  return add(scale(aed_loss, 1.0 - ctc_weight), scale(ctc_loss, ctc_weight));
}

double warmup_lr(std::int64_t step, double peak_lr, std::int64_t warmup_steps) {
  check(step >= 1 && warmup_steps >= 1, Errc::kValue, "warmup_lr: step and warmup_steps must be >= 1");
  const auto s = static_cast<double>(step), w = static_cast<double>(warmup_steps);
  return peak_lr * std::min(s / w, std::sqrt(w / s));
}

void adam_step(ParamList& params, AdamState& state, double lr, const AdamConfig& cfg) {
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), {});
    state.v.assign(params.size(), {});
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& t = params[i].tensor;
    auto p = t.data_mut();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.size()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    const bool has = t.has_grad();
    const auto g = t.grad();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = has ? g[j] : 0.0;
      p[j] -= lr * cfg.weight_decay * p[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
      p[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.eps);
    }
  }
}

double clip_grad_norm(ParamList& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    if (p.tensor.has_grad())
      for (double g : p.tensor.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& p : params)
      if (p.tensor.has_grad())
        for (double& g : p.tensor.grad_mut()) g *= f;
  }
  return norm;
}

int toy_tone_bin(int index, int num_tokens, int num_mels) {
  check(num_tokens >= 1 && num_tokens <= num_mels - 9, Errc::kConfig, "toy task: too many tokens for the mel axis");
  if (num_tokens == 1) return num_mels / 2;
  const double span = num_mels - 10;
  return static_cast<int>(std::lround(4.0 + index * span / (num_tokens - 1)));
}

Waveform toy_waveform(Rng& rng, std::span<const std::int64_t> tokens, const Vocabulary& vocab) {
  const auto regular = static_cast<int>(vocab.size() - 3);
  Waveform w;
  w.samples.reserve(tokens.size() * kToySegmentSamples);
  for (auto id : tokens) {
    check(vocab.is_regular(id), Errc::kValue, "toy task: token " + std::to_string(id) + " is not a regular token");
    const double f = mel_center_hz(toy_tone_bin(static_cast<int>(id - 2), regular));
    const double phase = 2.0 * std::numbers::pi * rng.uniform();
    for (int n = 0; n < kToySegmentSamples; ++n)
      w.samples.push_back(0.5 * std::sin(2.0 * std::numbers::pi * f * n / w.sample_rate + phase));
  }
  for (double& s : w.samples) s += 0.01 * rng.normal();
  return w;
}

std::vector<ToySample> toy_task_generate(Rng& rng, int num_samples, const Vocabulary& vocab, int min_len,
                                         int max_len) {
  const auto regular = vocab.size() - 3;
  check(regular >= 2 || max_len <= 1, Errc::kConfig, "toy task: sequences without repeats need >= 2 tokens");
  check(min_len >= 1 && max_len >= min_len, Errc::kConfig, "toy task: need 1 <= min_len <= max_len");
  std::vector<ToySample> out;
  out.reserve(static_cast<std::size_t>(num_samples));
  for (int i = 0; i < num_samples; ++i) {
    ToySample s;
    const auto len = rng.uniform_int(min_len, max_len);
    for (std::int64_t j = 0; j < len; ++j) {
      std::int64_t t;
      if (j == 0) {
        t = rng.uniform_int(0, regular - 1);
      } else {
        // Uniform over the tokens that differ from the previous one.
        t = rng.uniform_int(0, regular - 2);
        if (t >= s.tokens.back() - 2) ++t;
      }
      s.tokens.push_back(t + 2);
    }
    s.mel = log_mel(toy_waveform(rng, s.tokens, vocab));
    out.push_back(std::move(s));
  }
  return out;
}

Batch make_batch(const std::vector<ToySample>& data, std::span<const std::size_t> indices) {
  std::vector<Tensor> rows;
  Batch b;
  for (auto i : indices) {
    rows.push_back(data[i].mel);
    b.targets.push_back(data[i].tokens);
  }
  b.features = pad_batch(rows);
  return b;
}

namespace {

struct TeacherForcing {
  std::vector<std::vector<std::int64_t>> inputs;
  std::vector<std::int64_t> targets;  // flattened [B * L]
};

TeacherForcing teacher_forcing(const std::vector<std::vector<std::int64_t>>& seqs, const Vocabulary& vocab) {
  std::size_t len = 0;
  for (const auto& s : seqs) len = std::max(len, s.size() + 1);
  TeacherForcing tf;
  for (const auto& s : seqs) {
    std::vector<std::int64_t> in{vocab.sos()};
    in.insert(in.end(), s.begin(), s.end());
    std::vector<std::int64_t> tgt(s.begin(), s.end());
    tgt.push_back(vocab.eos());
    in.resize(len, vocab.pad());
    tgt.resize(len, kIgnoreTarget);
    tf.inputs.push_back(std::move(in));
    tf.targets.insert(tf.targets.end(), tgt.begin(), tgt.end());
  }
  return tf;
}

}  // namespace

LossParts compute_loss(const AsrModel& model, const Batch& batch, const ForwardContext& ctx) {
  const ModelConfig& cfg = model.config();
  const PaddedBatch enc = model.encode(batch.features, ctx);
  LossParts parts;
  parts.ctc = ctc_loss_batch(model.ctc_logprobs(enc), enc.lengths, batch.targets, cfg.vocab.blank());
  const TeacherForcing tf = teacher_forcing(batch.targets, cfg.vocab);
  const Memory mem{enc.x, enc.lengths};
  const Tensor lp = model.decoder().forward(tf.inputs, &mem, false, ctx);
  parts.aed = label_smoothed_ce(lp, tf.targets, cfg.training.label_smoothing);
  parts.loss = joint_loss(parts.aed, parts.ctc, cfg.training.ctc_weight);
  return parts;
}

double validation_accuracy(const AsrModel& model, const std::vector<ToySample>& data, int batch_size) {
  NoGradGuard guard;
  std::int64_t correct = 0, total = 0;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
    const Batch b = make_batch(data, idx);
    const PaddedBatch enc = model.encode(b.features, {});
    const TeacherForcing tf = teacher_forcing(b.targets, model.config().vocab);
    const Memory mem{enc.x, enc.lengths};
    const Tensor lp = model.decoder().forward(tf.inputs, &mem, false, {});
    const std::int64_t vocab = lp.dim(-1);
    const auto d = lp.data();
    for (std::size_t r = 0; r < tf.targets.size(); ++r) {
      if (tf.targets[r] == kIgnoreTarget) continue;
      const auto row = d.subspan(r * vocab, vocab);
      const auto best = std::max_element(row.begin(), row.end()) - row.begin();
      correct += best == tf.targets[r];
      ++total;
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

std::int64_t edit_distance(std::span<const std::int64_t> a, std::span<const std::int64_t> b) {
  std::vector<std::int64_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<std::int64_t>(i);
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1])});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double greedy_token_error(const AsrModel& model, const std::vector<ToySample>& data) {
  NoGradGuard guard;
  const Vocabulary& vocab = model.config().vocab;
  FusionWeights w;
  w.lambda_ilm = w.lambda_elm = w.ctc_weight = 0.0;
  w.beam_size = 1;
  std::int64_t edits = 0, ref = 0;
  for (const auto& s : data) {
    PaddedBatch f;
    f.x = reshape(s.mel, {1, s.mel.dim(0), s.mel.dim(1)});
    f.lengths = {s.mel.dim(0)};
    const PaddedBatch enc = model.encode(f, {});
    const Memory mem{enc.x, enc.lengths};
    const auto hyps = beam_search(make_sources(model.decoder(), &mem, vocab), w, static_cast<int>(enc.lengths[0]));
    std::vector<std::int64_t> out;
    if (!hyps.empty())
      for (auto t : hyps[0].tokens)
        if (vocab.is_regular(t)) out.push_back(t);
    edits += edit_distance(out, s.tokens);
    ref += static_cast<std::int64_t>(s.tokens.size());
  }
  return ref ? static_cast<double>(edits) / static_cast<double>(ref) : 0.0;
}

std::string to_jsonl(const MetricRecord& r) {
  nlohmann::json j;
  j["step"] = r.step;
  j["lr"] = r.lr;
  j["loss"] = r.loss;
  j["ctc_loss"] = r.ctc_loss;
  j["aed_loss"] = r.aed_loss;
  j["val_acc"] = r.val_acc < 0 ? nlohmann::json(nullptr) : nlohmann::json(r.val_acc);
  return j.dump();
}

namespace {

// Length-bucketed batches: sort a shuffled order by frame count, cut into
// batches, shuffle the batch order.
std::vector<std::vector<std::size_t>> bucket_batches(const std::vector<ToySample>& data, int batch_size, Rng& rng) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return data[a].mel.dim(0) < data[b].mel.dim(0); });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size))
    batches.emplace_back(order.begin() + i, order.begin() + std::min(order.size(), i + batch_size));
  for (std::size_t i = batches.size(); i > 1; --i)
    std::swap(batches[i - 1], batches[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  return batches;
}

}  // namespace

TrainResult train_loop(AsrModel& model, const std::vector<ToySample>& train, const std::vector<ToySample>& val,
                       Rng& rng, const TrainHooks& hooks) {
  const ModelConfig& cfg = model.config();
  const TrainConfig& tc = cfg.training;
  check(!train.empty(), Errc::kValue, "train_loop: empty training set");
  ParamList params = model.params();
  AdamState adam;
  const AdamConfig acfg{tc.beta1, tc.beta2, tc.eps, tc.weight_decay};
  TrainResult res;
  std::vector<std::vector<std::size_t>> epoch;
  std::size_t cursor = 0;

  auto keep_checkpoint = [&](double acc, std::int64_t step) {
    res.kept.push_back(snapshot(params));
    res.kept_scores.push_back(acc);
    res.kept_steps.push_back(step);
    if (res.kept.size() <= static_cast<std::size_t>(tc.average_top_k)) return;
    // Drop the worst: lowest score, earliest step on ties.
    std::size_t worst = 0;
    for (std::size_t i = 1; i < res.kept.size(); ++i) {
      if (res.kept_scores[i] < res.kept_scores[worst] ||
          (res.kept_scores[i] == res.kept_scores[worst] && res.kept_steps[i] < res.kept_steps[worst]))
        worst = i;
    }
    res.kept.erase(res.kept.begin() + static_cast<std::ptrdiff_t>(worst));
    res.kept_scores.erase(res.kept_scores.begin() + static_cast<std::ptrdiff_t>(worst));
    res.kept_steps.erase(res.kept_steps.begin() + static_cast<std::ptrdiff_t>(worst));
  };

  for (std::int64_t step = 1; step <= tc.total_steps; ++step) {
    if (cursor >= epoch.size()) {
      epoch = bucket_batches(train, tc.batch_size, rng);
      cursor = 0;
    }
    Batch batch = make_batch(train, epoch[cursor++]);
    if (tc.spec_augment) {
      std::vector<Tensor> rows;
      for (std::size_t b = 0; b < batch.targets.size(); ++b)
        rows.push_back(spec_augment(train[epoch[cursor - 1][b]].mel, cfg.spec_augment, rng));
      batch.features = pad_batch(rows);
    }
    for (auto& p : params) p.tensor.zero_grad();
    const ForwardContext ctx{true, &rng, nullptr};
    LossParts parts = compute_loss(model, batch, ctx);
    const double loss = parts.loss.item();
    check(std::isfinite(loss), Errc::kNumeric,
          "train_loop: non-finite loss at step " + std::to_string(step) + " (ctc " + std::to_string(parts.ctc.item()) +
              ", aed " + std::to_string(parts.aed.item()) + ")");
    parts.loss.backward();
    if (tc.grad_clip > 0.0) clip_grad_norm(params, tc.grad_clip);
    const double lr = warmup_lr(step, tc.peak_lr, tc.warmup_steps);
    adam_step(params, adam, lr, acfg);
    res.steps_run = step;

    MetricRecord rec{step, lr, loss, parts.ctc.item(), parts.aed.item(), -1.0};
    const bool validate = !val.empty() && (step % tc.val_interval == 0 || step == tc.total_steps);
    if (validate) {
      rec.val_acc = validation_accuracy(model, val);
      res.best_val_acc = std::max(res.best_val_acc, rec.val_acc);
      keep_checkpoint(rec.val_acc, step);
    }
    if (validate || step % tc.log_interval == 0 || step == 1) {
      res.log.push_back(rec);
      if (hooks.on_record) hooks.on_record(rec);
    }
    // Stop once every checkpoint retained for averaging meets the target.
    if (validate && tc.target_val_acc > 0.0 && res.kept.size() == static_cast<std::size_t>(tc.average_top_k) &&
        *std::min_element(res.kept_scores.begin(), res.kept_scores.end()) >= tc.target_val_acc)
      break;
  }
  if (!res.kept.empty()) {
    res.averaged = average_checkpoints(res.kept, res.kept_scores, static_cast<std::size_t>(tc.average_top_k),
                                       res.kept_steps);
    restore(res.averaged, params);
  }
  return res;
}

void train_toy_lm(Decoder& lm, const std::vector<ToySample>& data, const Vocabulary& vocab, int steps, Rng& rng) {
  ParamList params;
  lm.collect("lm", params);
  AdamState adam;
  const AdamConfig acfg;
  constexpr std::size_t kBatch = 32;
  for (int step = 1; step <= steps; ++step) {
    std::vector<std::vector<std::int64_t>> seqs;
    for (std::size_t i = 0; i < kBatch; ++i)
      seqs.push_back(data[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(data.size()) - 1))].tokens);
    const TeacherForcing tf = teacher_forcing(seqs, vocab);
    for (auto& p : params) p.tensor.zero_grad();
    const ForwardContext ctx{true, &rng, nullptr};
    const Tensor loss = label_smoothed_ce(lm.forward(tf.inputs, nullptr, true, ctx), tf.targets, 0.0);
    loss.backward();
    adam_step(params, adam, 1e-3 * std::min(1.0, step / 50.0), acfg);
  }
}

}  // namespace ebf
