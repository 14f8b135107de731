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

#include "ebf/ctc.hpp"

#include <cmath>
#include <string>

#include "ebf/error.hpp"

namespace ebf {

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

namespace {

struct Lattice {
  double nll;
  bool feasible;
  std::vector<double> grad;  // d nll / d logprobs, [T, V]
};

Lattice ctc_core(std::span<const double> lp, std::int64_t frames, std::int64_t vocab,
                 std::span<const std::int64_t> targets, std::int64_t blank, bool want_grad) {
  for (auto k : targets) {
    check(k >= 0 && k < vocab && k != blank, Errc::kValue, "ctc: target id " + std::to_string(k) + " invalid");
  }
  const auto n = static_cast<std::int64_t>(targets.size());
  std::int64_t repeats = 0;
  for (std::int64_t i = 1; i < n; ++i) repeats += targets[i] == targets[i - 1];
  Lattice out{std::numeric_limits<double>::infinity(), false, {}};
  if (want_grad) out.grad.assign(static_cast<std::size_t>(frames * vocab), 0.0);
  if (frames < n + repeats || frames == 0) return out;

  const std::int64_t S = 2 * n + 1;
  auto label = [&](std::int64_t s) { return s % 2 == 0 ? blank : targets[s / 2]; };
  auto skip_ok = [&](std::int64_t s) { return s % 2 == 1 && s >= 2 && label(s) != label(s - 2); };
  auto y = [&](std::int64_t t, std::int64_t s) { return lp[t * vocab + label(s)]; };

  std::vector<double> alpha(static_cast<std::size_t>(frames * S), kNegInf);
  alpha[0] = y(0, 0);
  if (S > 1) alpha[1] = y(0, 1);
  for (std::int64_t t = 1; t < frames; ++t) {
    for (std::int64_t s = 0; s < S; ++s) {
      double a = alpha[(t - 1) * S + s];
      if (s >= 1) a = log_add(a, alpha[(t - 1) * S + s - 1]);
      if (skip_ok(s)) a = log_add(a, alpha[(t - 1) * S + s - 2]);
      alpha[t * S + s] = a == kNegInf ? kNegInf : a + y(t, s);
    }
  }
  double ll = alpha[(frames - 1) * S + S - 1];
  if (S > 1) ll = log_add(ll, alpha[(frames - 1) * S + S - 2]);
  if (ll == kNegInf) return out;
  out.nll = -ll;
  out.feasible = true;
  if (!want_grad) return out;

  std::vector<double> beta(static_cast<std::size_t>(frames * S), kNegInf);
  beta[(frames - 1) * S + S - 1] = y(frames - 1, S - 1);
  if (S > 1) beta[(frames - 1) * S + S - 2] = y(frames - 1, S - 2);
  for (std::int64_t t = frames - 2; t >= 0; --t) {
    for (std::int64_t s = 0; s < S; ++s) {
      double b = beta[(t + 1) * S + s];
      if (s + 1 < S) b = log_add(b, beta[(t + 1) * S + s + 1]);
      if (s + 2 < S && skip_ok(s + 2)) b = log_add(b, beta[(t + 1) * S + s + 2]);
      beta[t * S + s] = b == kNegInf ? kNegInf : b + y(t, s);
    }
  }
  // d(-log P)/d log y_tk = -(1 / (P y_tk)) sum_{s: l_s = k} alpha_t(s) beta_t(s).
  std::vector<double> occ(static_cast<std::size_t>(vocab));
  for (std::int64_t t = 0; t < frames; ++t) {
    std::fill(occ.begin(), occ.end(), kNegInf);
    for (std::int64_t s = 0; s < S; ++s) {
      const double ab = alpha[t * S + s] + beta[t * S + s];
      if (ab != kNegInf) occ[label(s)] = log_add(occ[label(s)], ab);
    }
    for (std::int64_t k = 0; k < vocab; ++k) {
      if (occ[k] != kNegInf) out.grad[t * vocab + k] = -std::exp(occ[k] - lp[t * vocab + k] - ll);
    }
  }
  return out;
}

}  // namespace

CtcResult ctc_loss(const Tensor& logprobs, std::span<const std::int64_t> targets, std::int64_t blank) {
  check(logprobs.rank() == 2, Errc::kShape, "ctc_loss expects [T, V], got " + shape_str(logprobs.shape()));
  const std::int64_t frames = logprobs.dim(0), vocab = logprobs.dim(1);
  Lattice lat = ctc_core(logprobs.data(), frames, vocab, targets, blank, true);
  CtcResult r;
  r.feasible = lat.feasible;
  auto grad = std::make_shared<std::vector<double>>(std::move(lat.grad));
  r.loss = detail::make_result({}, {lat.nll}, {logprobs}, [grad](detail::Node& self) {
    auto g = detail::input_grad(self, 0);
    if (g.empty()) return;
    const double up = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += up * (*grad)[i];
  });
  return r;
}

Tensor ctc_loss_batch(const Tensor& logprobs, std::span<const std::int64_t> lengths,
                      const std::vector<std::vector<std::int64_t>>& targets, std::int64_t blank) {
  check(logprobs.rank() == 3, Errc::kShape, "ctc_loss_batch expects [B, T, V], got " + shape_str(logprobs.shape()));
  const std::int64_t batch = logprobs.dim(0), t_max = logprobs.dim(1), vocab = logprobs.dim(2);
  check(static_cast<std::int64_t>(lengths.size()) == batch && static_cast<std::int64_t>(targets.size()) == batch,
        Errc::kShape, "ctc_loss_batch: batch size mismatch");
  auto grad = std::make_shared<std::vector<double>>(static_cast<std::size_t>(batch * t_max * vocab), 0.0);
  double total = 0.0;
  const auto data = logprobs.data();
  for (std::int64_t b = 0; b < batch; ++b) {
    const std::int64_t frames = lengths[b];
    check(frames >= 1 && frames <= t_max, Errc::kValue, "ctc_loss_batch: bad length");
    Lattice lat = ctc_core(data.subspan(b * t_max * vocab, frames * vocab), frames, vocab, targets[b], blank,
                           logprobs.requires_grad());
    check(lat.feasible, Errc::kNumeric,
          "ctc: target of length " + std::to_string(targets[b].size()) + " infeasible in " +
              std::to_string(frames) + " frames");
    total += lat.nll;
    for (std::size_t i = 0; i < lat.grad.size(); ++i) (*grad)[b * t_max * vocab + i] = lat.grad[i] / batch;
  }
  return detail::make_result({}, {total / static_cast<double>(batch)}, {logprobs}, [grad](detail::Node& self) {
    auto g = detail::input_grad(self, 0);
    if (g.empty()) return;
    const double up = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += up * (*grad)[i];
  });
}

CtcPrefixScorer::CtcPrefixScorer(std::span<const double> logprobs, std::int64_t frames, std::int64_t vocab,
                                 std::int64_t blank)
    : logprobs_(logprobs), frames_(frames), vocab_(vocab), blank_(blank) {
  check(frames >= 1 && static_cast<std::int64_t>(logprobs.size()) >= frames * vocab, Errc::kShape,
        "ctc prefix scorer: logprob buffer too small");
}

CtcPrefixScorer::State CtcPrefixScorer::initial() const {
  State s;
  s.gamma_n.assign(static_cast<std::size_t>(frames_), kNegInf);
  s.gamma_b.resize(static_cast<std::size_t>(frames_));
  double acc = 0.0;
  for (std::int64_t t = 0; t < frames_; ++t) {
    acc += lp(t, blank_);
    s.gamma_b[t] = acc;
  }
  return s;
}

double CtcPrefixScorer::extend(const State& g, std::int64_t c, State* next) const {
  check(c >= 0 && c < vocab_ && c != blank_, Errc::kValue, "ctc prefix: token " + std::to_string(c) + " invalid");
  State local;
  State& h = next ? *next : local;
  h.gamma_n.assign(static_cast<std::size_t>(frames_), kNegInf);
  h.gamma_b.assign(static_cast<std::size_t>(frames_), kNegInf);
  h.last = c;
  h.length = g.length + 1;
  if (h.length > frames_) return kNegInf;

  double psi = kNegInf;
  if (g.length == 0) {
    h.gamma_n[0] = lp(0, c);
    psi = h.gamma_n[0];
  }
  for (std::int64_t t = 1; t < frames_; ++t) {
    const double phi = g.last == c ? g.gamma_b[t - 1] : log_add(g.gamma_b[t - 1], g.gamma_n[t - 1]);
    h.gamma_n[t] = log_add(h.gamma_n[t - 1], phi) + lp(t, c);
    h.gamma_b[t] = log_add(h.gamma_b[t - 1], h.gamma_n[t - 1]) + lp(t, blank_);
    psi = log_add(psi, phi + lp(t, c));
  }
  return psi;
}

double CtcPrefixScorer::final_score(const State& s) const {
  return log_add(s.gamma_n[frames_ - 1], s.gamma_b[frames_ - 1]);
}

double ctc_prefix_score(std::span<const std::int64_t> prefix, const Tensor& logprobs, std::int64_t blank) {
  check(logprobs.rank() == 2, Errc::kShape, "ctc_prefix_score expects [T, V]");
  if (prefix.empty()) return 0.0;
  if (static_cast<std::int64_t>(prefix.size()) > logprobs.dim(0)) return kNegInf;
  CtcPrefixScorer scorer(logprobs.data(), logprobs.dim(0), logprobs.dim(1), blank);
  CtcPrefixScorer::State s = scorer.initial(), next;
  double psi = 0.0;
  for (auto c : prefix) {
    psi = scorer.extend(s, c, &next);
    s = std::move(next);
  }
  return psi;
}

}  // namespace ebf
