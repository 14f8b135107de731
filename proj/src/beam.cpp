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

#include "ebf/beam.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>

#include "ebf/error.hpp"

namespace ebf {

void FusionWeights::validate() const {
  check(beam_size >= 1, Errc::kConfig, "beam_size must be >= 1");
  check(ctc_weight >= 0.0 && ctc_weight <= 1.0, Errc::kConfig, "ctc_weight must be in [0, 1]");
  check(std::isfinite(lambda_ilm) && std::isfinite(lambda_elm), Errc::kConfig, "fusion weights must be finite");
}

double combined_score(const Hypothesis& h, const FusionWeights& w) {
  double s = (1.0 - w.ctc_weight) * h.score_aed;
  // Skip zero-weighted terms so a -inf component cannot turn into NaN.
  if (w.ctc_weight != 0.0) s += w.ctc_weight * h.score_ctc;
  if (w.lambda_ilm != 0.0) s -= w.lambda_ilm * h.score_ilm;
  if (w.lambda_elm != 0.0) s += w.lambda_elm * h.score_lm;
  return s;
}

bool ranks_before(const Hypothesis& a, const Hypothesis& b) {
  if (a.combined != b.combined) return a.combined > b.combined;
  return a.tokens < b.tokens;
}

SearchSources make_sources(const Decoder& decoder, const Memory* memory, const Vocabulary& vocab, const Decoder* lm,
                           const Tensor* ctc_logprobs) {
  SearchSources s;
  s.decoder = &decoder;
  s.memory = memory;
  s.lm = lm;
  s.ctc_logprobs = ctc_logprobs;
  s.sos = vocab.sos();
  s.eos = vocab.eos();
  for (std::int64_t id = 0; id < vocab.size(); ++id)
    if (vocab.is_regular(id)) s.emit.push_back(id);
  return s;
}

namespace {

struct Live {
  Hypothesis hyp;
  std::shared_ptr<const CtcPrefixScorer::State> ctc;
};

// Next-token rows for every live hypothesis, batched (all share one length).
std::vector<std::vector<double>> batched_step(const Decoder& dec, const std::vector<Live>& live, const Memory* memory,
                                              bool disable_source) {
  NoGradGuard guard;
  std::vector<std::vector<std::int64_t>> ids;
  ids.reserve(live.size());
  for (const auto& l : live) ids.push_back(l.hyp.tokens);
  const Tensor lp = dec.forward(ids, memory, disable_source, {});
  const std::int64_t len = lp.dim(1), vocab = lp.dim(2);
  const auto d = lp.data();
  std::vector<std::vector<double>> rows(live.size());
  for (std::size_t b = 0; b < live.size(); ++b) {
    const auto begin = d.begin() + (static_cast<std::int64_t>(b) * len + len - 1) * vocab;
    rows[b].assign(begin, begin + vocab);
  }
  return rows;
}

}  // namespace

std::vector<Hypothesis> beam_search(const SearchSources& src, const FusionWeights& w, int max_len) {
  w.validate();
  check(src.decoder != nullptr, Errc::kConfig, "beam_search: decoder required");
  check(max_len >= 0, Errc::kConfig, "beam_search: max_len must be >= 0");
  std::optional<CtcPrefixScorer> ctc;
  if (src.ctc_logprobs) {
    check(src.ctc_logprobs->rank() == 2, Errc::kShape, "beam_search: ctc log-probs must be [T, V]");
    ctc.emplace(src.ctc_logprobs->data(), src.ctc_logprobs->dim(0), src.ctc_logprobs->dim(1));
  }

  std::vector<Live> live(1);
  live[0].hyp.tokens = {src.sos};
  if (ctc) live[0].ctc = std::make_shared<CtcPrefixScorer::State>(ctc->initial());
  std::vector<Hypothesis> finished;

  for (int step = 0; step <= max_len && !live.empty(); ++step) {
    const auto aed = batched_step(*src.decoder, live, src.memory, false);
    const auto ilm = batched_step(*src.decoder, live, nullptr, true);
    std::vector<std::vector<double>> lm;
    if (src.lm) lm = batched_step(*src.lm, live, nullptr, true);

    struct Candidate {
      Hypothesis hyp;
      std::shared_ptr<const CtcPrefixScorer::State> ctc;
    };
    std::vector<Candidate> cands;
    const bool forced_eos = step == max_len;
    for (std::size_t b = 0; b < live.size(); ++b) {
      const Hypothesis& h = live[b].hyp;
      auto make = [&](std::int64_t token) {
        Candidate c;
        c.hyp = h;
        c.hyp.tokens.push_back(token);
        c.hyp.score_aed += aed[b][token];
        c.hyp.score_ilm += ilm[b][token];
        if (src.lm) c.hyp.score_lm += lm[b][token];
        if (ctc) {
          if (token == src.eos) {
            c.hyp.score_ctc = ctc->final_score(*live[b].ctc);
          } else {
            auto next = std::make_shared<CtcPrefixScorer::State>();
            c.hyp.score_ctc = ctc->extend(*live[b].ctc, token, next.get());
            c.ctc = std::move(next);
          }
        }
        c.hyp.finished = token == src.eos;
        c.hyp.combined = combined_score(c.hyp, w);
        return c;
      };
      cands.push_back(make(src.eos));
      if (!forced_eos)
        for (auto t : src.emit) cands.push_back(make(t));
    }
    const std::size_t keep = std::min<std::size_t>(cands.size(), static_cast<std::size_t>(w.beam_size));
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) { return ranks_before(a.hyp, b.hyp); });
    live.clear();
    for (std::size_t i = 0; i < keep; ++i) {
      if (cands[i].hyp.finished) {
        finished.push_back(std::move(cands[i].hyp));
      } else {
        live.push_back({std::move(cands[i].hyp), std::move(cands[i].ctc)});
      }
    }
  }
  std::sort(finished.begin(), finished.end(), ranks_before);
  return finished;
}

}  // namespace ebf
