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

#include <cmath>

#include "doctest.h"
#include "ebf/error.hpp"
#include "ebf/gradcheck.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace ebf;
using ebf::testing::randn;

namespace {

Tensor random_logprobs(std::int64_t T, std::int64_t V, Rng& rng, double spread = 2.0) {
  return log_softmax(randn({T, V}, rng, spread));
}

std::vector<std::vector<std::int64_t>> all_targets(int max_len, std::int64_t V) {
  std::vector<std::vector<std::int64_t>> out{{}};
  for (std::size_t i = 0; i < out.size(); ++i)
    if (static_cast<int>(out[i].size()) < max_len)
      for (std::int64_t k = 1; k < V; ++k) {
        auto t = out[i];
        t.push_back(k);
        out.push_back(t);
      }
  return out;
}

}  // namespace

TEST_CASE("log_add") {
  CHECK(log_add(kNegInf, kNegInf) == kNegInf);
  CHECK(log_add(kNegInf, 1.5) == 1.5);
  CHECK(log_add(std::log(0.25), std::log(0.5)) == doctest::Approx(std::log(0.75)).epsilon(1e-15));
}

TEST_CASE("CTC single-frame and empty-target cases") {
  Rng rng(40);
  const Tensor one = random_logprobs(1, 3, rng);
  const std::vector<std::int64_t> a{2};
  CHECK(ctc_loss(one, a).loss.item() == doctest::Approx(-one.at({0, 2})).epsilon(1e-15));
  const Tensor lp = random_logprobs(4, 3, rng);
  double s = 0;
  for (int t = 0; t < 4; ++t) s += lp.at({t, 0});
  CHECK(ctc_loss(lp, std::vector<std::int64_t>{}).loss.item() == doctest::Approx(-s).epsilon(1e-14));
}

TEST_CASE("CTC loss equals path enumeration on every target, and flags infeasible ones") {
  Rng rng(41);
  double worst = 0;
  int infeasible = 0;
  for (std::int64_t V : {2, 3})
    for (std::int64_t T = 1; T <= 6; ++T) {
      const Tensor lp = random_logprobs(T, V, rng);
      for (const auto& target : all_targets(static_cast<int>(T) + 1, V)) {
        const double ref = ebf::oracle::ctc_log_likelihood(lp, target);
        const CtcResult r = ctc_loss(lp, target);
        if (ref == -INFINITY) {
          CHECK_FALSE(r.feasible);
          CHECK(r.loss.item() == INFINITY);
          ++infeasible;
        } else {
          CHECK(r.feasible);
          worst = std::max(worst, std::abs(-r.loss.item() - ref));
        }
      }
    }
  CHECK(worst < 1e-10);
  CHECK(infeasible > 0);
}

TEST_CASE("CTC gradient matches finite differences") {
  Rng rng(42);
  Tensor logits = randn({6, 3}, rng);
  logits.set_requires_grad(true);
  const std::vector<std::int64_t> target{1, 2, 2};
  GradcheckOptions o;
  o.tolerance = 1e-5;
  const auto r = gradcheck("ctc", [&] { return ctc_loss(log_softmax(logits), target).loss; }, {{"logits", logits}}, o);
  CHECK(r.passed);
}

TEST_CASE("batched CTC loss averages per-utterance losses over valid frames") {
  Rng rng(43);
  const Tensor lp = log_softmax(randn({2, 5, 4}, rng));
  const std::vector<std::int64_t> len{5, 3};
  const std::vector<std::vector<std::int64_t>> tg{{1, 2}, {3}};
  const double got = ctc_loss_batch(lp, len, tg).item();
  const Tensor r0 = reshape(slice(lp, 0, 0, 1), {5, 4});
  const Tensor r1 = reshape(slice(slice(lp, 0, 1, 1), 1, 0, 3), {3, 4});
  const double ref = (ctc_loss(r0, tg[0]).loss.item() + ctc_loss(r1, tg[1]).loss.item()) / 2;
  CHECK(got == doctest::Approx(ref).epsilon(1e-14));
  const std::vector<std::vector<std::int64_t>> bad{{1, 2}, {1, 1, 1}};
  try {
    ctc_loss_batch(lp, len, bad);
    FAIL("expected a numeric error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kNumeric);
  }
}

TEST_CASE("prefix score: enumeration, incremental scorer, monotone decrease") {
  Rng rng(44);
  const Tensor single = random_logprobs(1, 2, rng);
  CHECK(ctc_prefix_score(std::vector<std::int64_t>{1}, single) == doctest::Approx(single.at({0, 1})).epsilon(1e-15));
  double worst = 0;
  for (std::int64_t T = 1; T <= 5; ++T) {
    const Tensor lp = random_logprobs(T, 3, rng);
    CHECK(ctc_prefix_score(std::vector<std::int64_t>{}, lp) == 0.0);
    const CtcPrefixScorer scorer(lp.data(), T, 3);
    for (const auto& prefix : all_targets(static_cast<int>(T) + 1, 3)) {
      if (prefix.empty()) continue;
      const double ref = ebf::oracle::ctc_prefix(lp, prefix);
      const double got = ctc_prefix_score(prefix, lp);
      if (ref == -INFINITY) {
        CHECK(got == -INFINITY);
        continue;
      }
      worst = std::max(worst, std::abs(got - ref));
      // Incremental route must agree with the one-shot route.
      auto st = scorer.initial();
      double inc = 0;
      for (auto k : prefix) {
        CtcPrefixScorer::State next;
        inc = scorer.extend(st, k, &next);
        st = next;
      }
      worst = std::max(worst, std::abs(inc - ref));
      worst = std::max(worst, std::abs(scorer.final_score(st) - ebf::oracle::ctc_log_likelihood(lp, prefix)));
      std::vector<std::int64_t> shorter(prefix.begin(), prefix.end() - 1);
      CHECK(got <= ctc_prefix_score(shorter, lp) + 1e-12);
    }
  }
  CHECK(worst < 1e-10);
  const Tensor lp = random_logprobs(2, 3, rng);
  CHECK(ctc_prefix_score(std::vector<std::int64_t>{1, 2, 1}, lp) == -INFINITY);
}
