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
#include <vector>

#include "ebf/ctc.hpp"
#include "ebf/decoder.hpp"

namespace ebf {

struct FusionWeights {
  double lambda_ilm = 0.2;
  double lambda_elm = 0.6;
  double ctc_weight = 0.0;
  int beam_size = 10;

  void validate() const;
};

struct Hypothesis {
  std::vector<std::int64_t> tokens;  // starts with sos; ends with eos once finished
  double score_aed = 0.0;
  double score_ilm = 0.0;
  double score_lm = 0.0;
  double score_ctc = 0.0;
  double combined = 0.0;
  bool finished = false;
};

// (1 - w) aed + w ctc - lambda_ilm ilm + lambda_elm lm.
double combined_score(const Hypothesis& h, const FusionWeights& w);

// Strict ordering used for ranking: higher combined first, then
// lexicographically smaller token sequence.
bool ranks_before(const Hypothesis& a, const Hypothesis& b);

struct SearchSources {
  const Decoder* decoder = nullptr;  // required
  const Memory* memory = nullptr;    // encoder output, batch of one
  const Decoder* lm = nullptr;       // optional external LM
  const Tensor* ctc_logprobs = nullptr;  // optional [T', V]
  std::int64_t sos = 0, eos = 0;
  std::vector<std::int64_t> emit;    // tokens the search may emit besides eos
};

// Length-synchronous beam search. Hypotheses reaching max_len regular
// tokens can only emit eos. Returns all finished hypotheses, best first.
std::vector<Hypothesis> beam_search(const SearchSources& src, const FusionWeights& w, int max_len);

// Convenience: sources from a vocabulary (emits every regular token).
SearchSources make_sources(const Decoder& decoder, const Memory* memory, const Vocabulary& vocab,
                           const Decoder* lm = nullptr, const Tensor* ctc_logprobs = nullptr);

}  // namespace ebf
