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

#include "doctest.h"

#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "ebf/ops.hpp"
#include "ebf/training.hpp"
#include "support.hpp"

using namespace ebf;
using ebf::testing::bitwise_equal;
using ebf::testing::randn;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.encoder = ebf::testing::small_encoder(16, 1);
  cfg.encoder.input_dim = 80;
  cfg.decoder.layers = 1;
  cfg.decoder.heads = 2;
  cfg.decoder.dropout = 0.0;
  cfg.vocab = Vocabulary::toy(4);
  cfg.training.batch_size = 8;
  cfg.training.warmup_steps = 50;
  cfg.training.peak_lr = 3e-3;
  cfg.training.val_interval = 25;
  cfg.training.log_interval = 1;
  cfg.training.average_top_k = 2;
  return cfg.resolved();
}

std::vector<ToySample> tiny_data(std::uint64_t seed, int n, const Vocabulary& v) {
  Rng rng(seed);
  return toy_task_generate(rng, n, v, 1, 2);
}

std::vector<std::vector<double>> values(const ParamList& p) {
  std::vector<std::vector<double>> out;
  for (const auto& x : p) out.emplace_back(x.tensor.data().begin(), x.tensor.data().end());
  return out;
}

}  // namespace

TEST_CASE("warmup schedule rises linearly then decays as inverse square root") {
  const double peak = 2e-3;
  const std::int64_t w = 1000;
  CHECK(warmup_lr(w, peak, w) == doctest::Approx(peak).epsilon(1e-15));
  CHECK(warmup_lr(w / 4, peak, w) == doctest::Approx(peak / 4).epsilon(1e-15));
  CHECK(warmup_lr(4 * w, peak, w) == doctest::Approx(peak / 2).epsilon(1e-15));
  CHECK(warmup_lr(1, peak, w) == doctest::Approx(peak / w).epsilon(1e-15));
  for (std::int64_t s = 1; s < w; ++s) CHECK(warmup_lr(s + 1, peak, w) > warmup_lr(s, peak, w));
  for (std::int64_t s = w; s < 5 * w; ++s) CHECK(warmup_lr(s + 1, peak, w) < warmup_lr(s, peak, w));
  // Both pieces meet at the warmup step.
  CHECK(std::abs(warmup_lr(w + 1, peak, w) - warmup_lr(w - 1, peak, w)) < 3 * peak / w);
  CHECK_THROWS_AS(warmup_lr(0, peak, w), Error);
  CHECK_THROWS_AS(warmup_lr(1, peak, 0), Error);
}

TEST_CASE("Adam with decoupled weight decay") {
  AdamConfig cfg;
  cfg.weight_decay = 0.0;

  SUBCASE("zero gradient is a fixed point") {
    ParamList p;
    register_param(p, "x", Tensor({3}, {1.0, -2.0, 0.5}));
    AdamState st;
    for (int i = 0; i < 5; ++i) {
      p[0].tensor.zero_grad();
      sum(mul(p[0].tensor, Tensor({3}, 0.0))).backward();
      adam_step(p, st, 0.1, cfg);
    }
    CHECK(values(p)[0] == std::vector<double>{1.0, -2.0, 0.5});
  }

  SUBCASE("first step moves each coordinate by lr against the gradient sign") {
    ParamList p;
    register_param(p, "x", Tensor({3}, {1.0, -2.0, 0.5}));
    AdamState st;
    sum(mul(p[0].tensor, Tensor({3}, {4.0, -0.01, 100.0}))).backward();
    adam_step(p, st, 0.1, cfg);
    const auto v = values(p)[0];
    CHECK(v[0] == doctest::Approx(0.9).epsilon(1e-7));
    CHECK(v[1] == doctest::Approx(-1.9).epsilon(1e-6));
    CHECK(v[2] == doctest::Approx(0.4).epsilon(1e-7));
  }

  SUBCASE("decaying steps minimise a quadratic") {
    ParamList p;
    register_param(p, "x", Tensor({2}, {0.0, 5.0}));
    AdamState st;
    const Tensor target({2}, {1.0, -2.0});
    for (int i = 0; i < 600; ++i) {
      p[0].tensor.zero_grad();
      const Tensor d = sub(p[0].tensor, target);
      sum(mul(d, d)).backward();
      adam_step(p, st, 0.3 * std::pow(0.985, i), cfg);
    }
    const auto v = values(p)[0];
    CHECK(std::abs(v[0] - 1.0) < 1e-3);
    CHECK(std::abs(v[1] + 2.0) < 1e-3);
  }

  SUBCASE("weight decay shrinks parameters without gradient") {
    AdamConfig wd;
    wd.weight_decay = 0.5;
    ParamList p;
    register_param(p, "x", Tensor({1}, {2.0}));
    AdamState st;
    adam_step(p, st, 0.1, wd);
    CHECK(values(p)[0][0] == doctest::Approx(2.0 * (1 - 0.05)).epsilon(1e-15));
  }
}

TEST_CASE("gradient clipping rescales to the requested global norm") {
  ParamList p;
  register_param(p, "a", Tensor({2}, {0.0, 0.0}));
  register_param(p, "b", Tensor({1}, {0.0}));
  add(sum(mul(p[0].tensor, Tensor({2}, {3.0, 0.0}))), sum(mul(p[1].tensor, Tensor({1}, {4.0})))).backward();
  CHECK(clip_grad_norm(p, 10.0) == doctest::Approx(5.0));
  CHECK(p[0].tensor.grad()[0] == 3.0);
  CHECK(clip_grad_norm(p, 1.0) == doctest::Approx(5.0));
  CHECK(p[0].tensor.grad()[0] == doctest::Approx(0.6));
  CHECK(p[1].tensor.grad()[0] == doctest::Approx(0.8));
}

TEST_CASE("label-smoothed cross entropy") {
  Rng rng(5);
  const std::int64_t V = 6;
  const Tensor lp = log_softmax(randn({2, 3, V}, rng));
  const std::vector<std::int64_t> targets{0, 3, kIgnoreTarget, 5, 2, kIgnoreTarget};

  // Straight-line definition.
  const double eps = 0.1;
  double ref = 0.0;
  int count = 0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] == kIgnoreTarget) continue;
    ++count;
    for (std::int64_t v = 0; v < V; ++v) {
      const double q = v == targets[r] ? 1.0 - eps : eps / (V - 1);
      ref -= q * lp.data()[r * V + v];
    }
  }
  ref /= count;
  CHECK(label_smoothed_ce(lp, targets, eps).item() == doctest::Approx(ref).epsilon(1e-14));

  // No smoothing is the mean negative log-likelihood.
  double nll = 0.0;
  for (std::size_t r = 0; r < targets.size(); ++r)
    if (targets[r] != kIgnoreTarget) nll -= lp.data()[r * V + targets[r]];
  CHECK(label_smoothed_ce(lp, targets, 0.0).item() == doctest::Approx(nll / count).epsilon(1e-14));

  // Against a uniform prediction the loss is log V for any smoothing.
  const Tensor uniform({4, V}, -std::log(static_cast<double>(V)));
  const std::vector<std::int64_t> t4{0, 1, 2, 3};
  for (double s : {0.0, 0.1, 0.5})
    CHECK(label_smoothed_ce(uniform, t4, s).item() == doctest::Approx(std::log(6.0)).epsilon(1e-14));

  // Ignored rows contribute nothing, not even gradient.
  Tensor x = randn({3, V}, rng);
  x.set_requires_grad(true);
  label_smoothed_ce(log_softmax(x), std::vector<std::int64_t>{1, kIgnoreTarget, 4}, eps).backward();
  for (std::int64_t v = 0; v < V; ++v) CHECK(x.grad()[V + v] == 0.0);

  CHECK_THROWS_AS(label_smoothed_ce(lp, std::vector<std::int64_t>{0, 1}, eps), Error);
  CHECK_THROWS_AS(label_smoothed_ce(uniform, std::vector<std::int64_t>(4, kIgnoreTarget), eps), Error);
  CHECK_THROWS_AS(label_smoothed_ce(uniform, std::vector<std::int64_t>{0, 1, 2, 6}, eps), Error);
}

TEST_CASE("joint loss interpolates the two objectives") {
  Tensor aed({}, 2.0), ctc({}, 4.0);
  aed.set_requires_grad(true);
  ctc.set_requires_grad(true);
  CHECK(joint_loss(aed, ctc, 0.0).item() == 2.0);
  CHECK(joint_loss(aed, ctc, 1.0).item() == 4.0);
  const Tensor j = joint_loss(aed, ctc, 0.3);
  CHECK(j.item() == doctest::Approx(2.6).epsilon(1e-15));
  j.backward();
  CHECK(aed.grad()[0] == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(ctc.grad()[0] == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("toy task data") {
  const Vocabulary v = Vocabulary::toy(12);
  std::set<int> bins;
  for (int i = 0; i < 12; ++i) {
    const int b = toy_tone_bin(i, 12);
    CHECK(b >= 4);
    CHECK(b <= 75);
    bins.insert(b);
  }
  CHECK(bins.size() == 12);
  CHECK_THROWS_AS(toy_tone_bin(0, 72), Error);

  Rng a(9), b(9);
  const auto d1 = toy_task_generate(a, 40, v, 2, 5);
  const auto d2 = toy_task_generate(b, 40, v, 2, 5);
  for (std::size_t i = 0; i < d1.size(); ++i) {
    CHECK(d1[i].tokens == d2[i].tokens);
    CHECK(bitwise_equal(d1[i].mel, d2[i].mel));
    const auto L = static_cast<std::int64_t>(d1[i].tokens.size());
    CHECK(L >= 2);
    CHECK(L <= 5);
    CHECK(d1[i].mel.dim(0) == 12 * L - 3);
    CHECK(d1[i].mel.dim(1) == 80);
    CHECK(subsampled_length(d1[i].mel.dim(0)) == 3 * L - 2);
    for (std::size_t j = 0; j < d1[i].tokens.size(); ++j) {
      CHECK(v.is_regular(d1[i].tokens[j]));
      if (j > 0) CHECK(d1[i].tokens[j] != d1[i].tokens[j - 1]);
    }
  }

  // The loudest mel bin in the middle of each segment is that token's tone.
  for (const auto& s : d1) {
    for (std::size_t j = 0; j < s.tokens.size(); ++j) {
      const std::int64_t frame = 12 * static_cast<std::int64_t>(j) + 4;
      const auto row = s.mel.data().subspan(static_cast<std::size_t>(frame * 80), 80);
      const auto arg = std::max_element(row.begin(), row.end()) - row.begin();
      CHECK(std::abs(arg - toy_tone_bin(static_cast<int>(s.tokens[j] - 2), 12)) <= 1);
    }
  }
}

TEST_CASE("edit distance and metric records") {
  using V = std::vector<std::int64_t>;
  CHECK(edit_distance(V{}, V{}) == 0);
  CHECK(edit_distance(V{1, 2, 3}, V{}) == 3);
  CHECK(edit_distance(V{}, V{4, 5}) == 2);
  CHECK(edit_distance(V{1, 2, 3}, V{1, 3}) == 1);
  CHECK(edit_distance(V{1, 2, 3}, V{3, 2, 1}) == 2);
  CHECK(edit_distance(V{1, 2, 3, 4}, V{2, 3, 4, 5}) == 2);

  MetricRecord r{7, 0.5, 1.25, 2.0, 1.0, -1.0};
  CHECK(to_jsonl(r).find("\"val_acc\":null") != std::string::npos);
  r.val_acc = 0.75;
  CHECK(to_jsonl(r).find("\"val_acc\":0.75") != std::string::npos);
  CHECK(to_jsonl(r).find('\n') == std::string::npos);
}

TEST_CASE("zero learning rate and zero decay leave parameters untouched") {
  ModelConfig cfg = tiny_config();
  cfg.training.peak_lr = 0.0;
  cfg.training.total_steps = 5;
  Rng init(1);
  AsrModel model(cfg, init);
  const auto before = values(model.params());
  const auto data = tiny_data(2, 16, cfg.vocab);
  Rng rng(3);
  const TrainResult res = train_loop(model, data, {}, rng);
  CHECK(res.steps_run == 5);
  CHECK(res.kept.empty());
  CHECK(values(model.params()) == before);
}

TEST_CASE("seeded training replays bitwise") {
  ModelConfig cfg = tiny_config();
  cfg.training.total_steps = 50;
  const auto data = tiny_data(2, 32, cfg.vocab);
  const auto val = tiny_data(4, 8, cfg.vocab);
  auto run = [&] {
    Rng init(1), rng(3);
    AsrModel model(cfg, init);
    TrainResult r = train_loop(model, data, val, rng);
    return std::make_pair(values(model.params()), r);
  };
  const auto [p1, r1] = run();
  const auto [p2, r2] = run();
  CHECK(p1 == p2);
  REQUIRE(r1.log.size() == r2.log.size());
  for (std::size_t i = 0; i < r1.log.size(); ++i) CHECK(to_jsonl(r1.log[i]) == to_jsonl(r2.log[i]));
  CHECK(r1.kept_steps == std::vector<std::int64_t>{25, 50});
}

TEST_CASE("training lowers the loss and keeps the best checkpoints") {
  ModelConfig cfg = tiny_config();
  cfg.training.total_steps = 300;
  const auto data = tiny_data(2, 64, cfg.vocab);
  const auto val = tiny_data(4, 16, cfg.vocab);
  Rng init(1), rng(3);
  AsrModel model(cfg, init);
  const TrainResult res = train_loop(model, data, val, rng);
  REQUIRE(res.log.size() >= 300);
  double early = 0.0, late = 0.0;
  for (int i = 0; i < 20; ++i) {
    early += res.log[static_cast<std::size_t>(i)].loss;
    late += res.log[res.log.size() - 1 - static_cast<std::size_t>(i)].loss;
  }
  CHECK(late < 0.7 * early);

  // The kept set is the top-k of every validation score seen.
  std::vector<double> scores;
  for (const auto& r : res.log)
    if (r.val_acc >= 0) scores.push_back(r.val_acc);
  CHECK(scores.size() == 12);
  std::sort(scores.rbegin(), scores.rend());
  std::vector<double> kept = res.kept_scores;
  std::sort(kept.rbegin(), kept.rend());
  CHECK(kept == std::vector<double>(scores.begin(), scores.begin() + 2));
  CHECK(res.best_val_acc == scores.front());
}

TEST_CASE("early stopping waits until every kept checkpoint meets the target") {
  ModelConfig cfg = tiny_config();
  cfg.training.total_steps = 400;
  cfg.training.val_interval = 10;
  cfg.training.average_top_k = 3;
  cfg.training.target_val_acc = 0.5;
  const auto data = tiny_data(2, 64, cfg.vocab);
  const auto val = tiny_data(4, 16, cfg.vocab);
  Rng init(1), rng(3);
  AsrModel model(cfg, init);
  const TrainResult res = train_loop(model, data, val, rng);

  // Replay the keep/stop rule over the logged validation scores.
  std::vector<std::pair<double, std::int64_t>> kept;
  std::int64_t expect = cfg.training.total_steps;
  for (const auto& r : res.log) {
    if (r.val_acc < 0) continue;
    kept.emplace_back(r.val_acc, r.step);
    std::sort(kept.begin(), kept.end(), [](auto a, auto b) { return a.first != b.first ? a.first > b.first : a.second > b.second; });
    if (kept.size() > 3) kept.pop_back();
    if (kept.size() == 3 && kept.back().first >= 0.5) {
      expect = r.step;
      break;
    }
  }
  CHECK(res.steps_run == expect);
  CHECK(res.steps_run >= 30);
}
