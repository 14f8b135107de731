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
#include <limits>
#include <span>
#include <vector>

#include "ebf/tensor.hpp"

namespace ebf {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b);

struct CtcResult {
  Tensor loss;            // scalar; +inf when infeasible
  bool feasible = true;
};

// Negative log-likelihood of `targets` under per-frame log-probabilities
// logprobs[T, V]. Differentiable in logprobs; an infeasible target yields
// +inf with feasible = false and a zero gradient.
CtcResult ctc_loss(const Tensor& logprobs, std::span<const std::int64_t> targets, std::int64_t blank = 0);

// Batched form over logprobs[B, T, V] with per-row valid lengths. Returns
// the sum of per-utterance losses divided by B. Throws kNumeric when a row
// is infeasible.
Tensor ctc_loss_batch(const Tensor& logprobs, std::span<const std::int64_t> lengths,
                      const std::vector<std::vector<std::int64_t>>& targets, std::int64_t blank = 0);

// Incremental prefix scorer over fixed log-probabilities [T, V]. A state
// holds the blank / non-blank forward variables of one prefix.
class CtcPrefixScorer {
 public:
  struct State {
    std::vector<double> gamma_n;  // log, per frame
    std::vector<double> gamma_b;
    std::int64_t last = -1;       // last token, -1 for the empty prefix
    std::int64_t length = 0;
  };

  CtcPrefixScorer(std::span<const double> logprobs, std::int64_t frames, std::int64_t vocab,
                  std::int64_t blank = 0);

  State initial() const;
  // log P(paths whose collapse starts with prefix(state) + token). Fills
  // *next with the extended state when non-null.
  double extend(const State& state, std::int64_t token, State* next) const;
  // log P(collapse == prefix(state)).
  double final_score(const State& state) const;

  std::int64_t frames() const { return frames_; }

 private:
  double lp(std::int64_t t, std::int64_t k) const { return logprobs_[t * vocab_ + k]; }
  std::span<const double> logprobs_;
  std::int64_t frames_, vocab_, blank_;
};

// log of the mass of all alignments whose collapse has `prefix` as a
// prefix. Empty prefix -> 0; prefix longer than T -> -inf.
double ctc_prefix_score(std::span<const std::int64_t> prefix, const Tensor& logprobs, std::int64_t blank = 0);

}  // namespace ebf
