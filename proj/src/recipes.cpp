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

#include "ebf/recipes.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ebf/audio.hpp"
#include "ebf/error.hpp"
#include "ebf/profiler.hpp"
#include "json.hpp"

namespace ebf {

namespace fs = std::filesystem;

ToyData make_toy_data(const ModelConfig& cfg) {
  Rng rng(cfg.toy.seed);
  ToyData d;
  d.train = toy_task_generate(rng, cfg.toy.num_train, cfg.vocab, cfg.toy.min_len, cfg.toy.max_len);
  d.val = toy_task_generate(rng, cfg.toy.num_val, cfg.vocab, cfg.toy.min_len, cfg.toy.max_len);
  return d;
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) fail(Errc::kIo, "cannot create directory " + p.string() + ": " + ec.message());
}

Checkpoint merged(const Checkpoint& a, const ParamList& extra) {
  Checkpoint out = a;
  for (auto& e : snapshot(extra).entries) out.entries.push_back(std::move(e));
  return out;
}

}  // namespace

ToyRunSummary run_toy_recipe(const ModelConfig& cfg_in, const std::string& out_dir, std::ostream* progress) {
  const ModelConfig cfg = cfg_in.resolved();
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path out(out_dir);
  ensure_dir(out / "checkpoints");

  const ToyData data = make_toy_data(cfg);
  Rng rng(cfg.training.seed);
  AsrModel model(cfg, rng);

  std::ofstream log(out / "metrics.jsonl");
  if (!log) fail(Errc::kIo, "cannot write " + (out / "metrics.jsonl").string());
  TrainHooks hooks;
  hooks.on_record = [&](const MetricRecord& r) {
    const std::string line = to_jsonl(r);
    log << line << '\n';
    log.flush();
    if (progress) *progress << line << '\n' << std::flush;
  };
  TrainResult res = train_loop(model, data.train, data.val, rng, hooks);

  ToyRunSummary s;
  for (std::size_t i = 0; i < res.kept.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "step_%06lld.ebf", static_cast<long long>(res.kept_steps[i]));
    const fs::path p = out / "checkpoints" / name;
    save_checkpoint(p.string(), res.kept[i]);
    s.checkpoint_paths.push_back(p.string());
  }

  Rng lm_rng(cfg.training.seed + 1);
  Decoder lm(lm_config(cfg), lm_rng);
  if (cfg.toy.lm_steps > 0) train_toy_lm(lm, data.train, cfg.vocab, cfg.toy.lm_steps, lm_rng);
  ParamList lm_params;
  lm.collect("lm", lm_params);
  const Checkpoint base = res.kept.empty() ? snapshot(model.params()) : res.averaged;
  s.averaged_path = (out / "averaged.ebf").string();
  save_checkpoint(s.averaged_path, merged(base, lm_params));

  s.val_acc = validation_accuracy(model, data.val);
  s.token_error = greedy_token_error(model, data.val);
  s.best_val_acc = res.best_val_acc;
  s.steps = res.steps_run;
  s.params = count_elements(model.params());
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return s;
}

LoadedModel load_model(const ModelConfig& cfg_in, const Checkpoint& ckpt) {
  const ModelConfig cfg = cfg_in.resolved();
  Rng rng(0);
  LoadedModel m{AsrModel(cfg, rng), Decoder(), false};
  Checkpoint model_part, lm_part;
  for (const auto& e : ckpt.entries)
    (e.name.rfind("lm.", 0) == 0 ? lm_part : model_part).entries.push_back(e);
  ParamList params = m.model.params();
  restore(model_part, params);
  if (!lm_part.entries.empty()) {
    m.lm = Decoder(lm_config(cfg), rng);
    ParamList lp;
    m.lm.collect("lm", lp);
    restore(lm_part, lp);
    m.has_lm = true;
  }
  return m;
}

DecodeResult decode_input(const LoadedModel& m, const std::string& input, const FusionWeights& w) {
  w.validate();
  const ModelConfig& cfg = m.model.config();
  const Vocabulary& vocab = cfg.vocab;
  if (w.lambda_elm != 0.0 && !m.has_lm)
    fail(Errc::kConfig, "lambda_elm is nonzero but the checkpoint has no lm.* parameters");
  DecodeResult r;
  Tensor mel;
  if (input == "toy" || input.rfind("toy:", 0) == 0) {
    std::uint64_t seed = 0;
    if (input.size() > 4) {
      try {
        seed = std::stoull(input.substr(4));
      } catch (const std::exception&) {
        fail(Errc::kValue, "bad toy seed in '" + input + "'");
      }
    }
    Rng rng(seed);
    auto s = toy_task_generate(rng, 1, vocab, cfg.toy.min_len, cfg.toy.max_len);
    mel = s[0].mel;
    for (auto t : s[0].tokens) r.reference.push_back(vocab.tokens[static_cast<std::size_t>(t)]);
  } else {
    const Waveform wav = read_wav(input);
    if (wav.sample_rate != MelConfig{}.sample_rate)
      fail(Errc::kValue, "expected 16000 Hz audio, got " + std::to_string(wav.sample_rate));
    mel = log_mel(wav);
  }
  if (mel.dim(0) < 7) fail(Errc::kValue, "input too short for the 4x subsampling frontend");
  NoGradGuard guard;
  PaddedBatch f;
  f.x = reshape(mel, {1, mel.dim(0), mel.dim(1)});
  f.lengths = {mel.dim(0)};
  const PaddedBatch enc = m.model.encode(f, {});
  const Memory mem{enc.x, enc.lengths};
  Tensor ctc;
  if (w.ctc_weight != 0.0) {
    const Tensor lp = m.model.ctc_logprobs(enc);
    ctc = reshape(lp, {lp.dim(1), lp.dim(2)});
  }
  const auto src = make_sources(m.model.decoder(), &mem, vocab, m.has_lm ? &m.lm : nullptr,
                                w.ctc_weight != 0.0 ? &ctc : nullptr);
  const auto hyps = beam_search(src, w, static_cast<int>(enc.lengths[0]));
  if (hyps.empty()) fail(Errc::kInternal, "beam search returned no hypothesis");
  r.best = hyps[0];
  for (auto t : r.best.tokens)
    if (vocab.is_regular(t)) r.text.push_back(vocab.tokens[static_cast<std::size_t>(t)]);
  r.frames = mel.dim(0);
  r.encoder_frames = enc.lengths[0];
  return r;
}

std::string format_decode(const DecodeResult& r, const FusionWeights& w, bool json) {
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& t : v) s += (s.empty() ? "" : " ") + t;
    return s;
  };
  if (json) {
    nlohmann::json j;
    j["hypothesis"] = r.text;
    if (!r.reference.empty()) j["reference"] = r.reference;
    j["score_aed"] = r.best.score_aed;
    j["score_ctc"] = r.best.score_ctc;
    j["score_ilm"] = r.best.score_ilm;
    j["score_lm"] = r.best.score_lm;
    j["combined"] = r.best.combined;
    j["weights"] = {{"beam", w.beam_size}, {"ctc_weight", w.ctc_weight}, {"lambda_ilm", w.lambda_ilm},
                    {"lambda_elm", w.lambda_elm}};
    j["frames"] = r.frames;
    j["encoder_frames"] = r.encoder_frames;
    return j.dump(2) + "\n";
  }
  std::ostringstream o;
  o << "hypothesis: " << join(r.text) << '\n';
  if (!r.reference.empty()) o << "reference:  " << join(r.reference) << '\n';
  o << "score_aed  " << fmt("%.6f", r.best.score_aed) << '\n'
    << "score_ctc  " << fmt("%.6f", r.best.score_ctc) << "  (weight " << w.ctc_weight << ")\n"
    << "score_ilm  " << fmt("%.6f", r.best.score_ilm) << "  (lambda " << w.lambda_ilm << ")\n"
    << "score_lm   " << fmt("%.6f", r.best.score_lm) << "  (lambda " << w.lambda_elm << ")\n"
    << "combined   " << fmt("%.6f", r.best.combined) << '\n';
  return o.str();
}

std::vector<AblationRow> run_ablation(const ModelConfig& base_in, const std::string& sweep, int steps,
                                      std::ostream* progress) {
  if (steps < 1) fail(Errc::kValue, "ablation needs at least one training step");
  ModelConfig base = base_in;
  base.training.total_steps = steps;
  base.training.target_val_acc = 0.0;
  base.training.val_interval = std::min(base.training.val_interval, steps);
  base.training.average_top_k = std::min(base.training.average_top_k, 3);

  std::vector<std::pair<AblationRow, ModelConfig>> plan;
  if (sweep == "merge_variant") {
    const std::pair<MergeKind, const char*> kinds[] = {
        {MergeKind::kConcatProj, "w/o Depth-wise Conv (b)"},
        {MergeKind::kDepthConv, "w Depth-wise Conv (c)"},
        {MergeKind::kMultiKernel, "  + Multiple Kernel (d)"},
        {MergeKind::kDepthConvSE, "  + SE block (e)"},
        {MergeKind::kConvModuleInternal, "Conv Module (internal) (f)"},
        {MergeKind::kConvModuleExternal, "Conv Module (external)"},
    };
    for (const auto& [kind, label] : kinds) {
      ModelConfig c = base;
      c.encoder.merge.kind = kind;
      AblationRow row;
      row.label = label;
      row.setting = std::string(to_string(kind));
      plan.emplace_back(row, c);
    }
  } else if (sweep == "merge_kernel") {
    for (int k : {3, 15, 31, 63}) {
      ModelConfig c = base;
      c.encoder.merge.kind = MergeKind::kDepthConv;
      c.encoder.merge_kernel = k;
      AblationRow row;
      row.label = std::to_string(k);
      row.setting = "merge_kernel=" + std::to_string(k);
      plan.emplace_back(row, c);
    }
  } else {
    fail(Errc::kValue, "unknown sweep '" + sweep + "' (expected merge_variant or merge_kernel)");
  }

  const ToyData data = make_toy_data(base.resolved());
  std::vector<AblationRow> rows;
  for (auto& [row, c_in] : plan) {
    const ModelConfig c = c_in.resolved();
    Rng rng(c.training.seed);
    AsrModel model(c, rng);
    row.encoder_params = count_params(model.params()).encoder_params;
    row.macs = estimate_macs(c.encoder).total_macs;
    train_loop(model, data.train, data.val, rng);
    row.val_acc = validation_accuracy(model, data.val);
    row.token_error = greedy_token_error(model, data.val);
    if (progress)
      *progress << row.setting << ": acc " << fmt("%.4f", row.val_acc) << " ter " << fmt("%.4f", row.token_error)
                << '\n'
                << std::flush;
    rows.push_back(row);
  }
  return rows;
}

std::string format_ablation(const std::vector<AblationRow>& rows, const std::string& sweep, bool json) {
  if (json) {
    nlohmann::json j;
    j["sweep"] = sweep;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows)
      j["rows"].push_back({{"label", r.label},
                           {"setting", r.setting},
                           {"encoder_params", r.encoder_params},
                           {"macs", r.macs},
                           {"val_acc", r.val_acc},
                           {"token_error", r.token_error}});
    return j.dump(2) + "\n";
  }
  std::ostringstream o;
  const char* head = sweep == "merge_kernel" ? "Kernel size" : "Method";
  char line[160];
  std::snprintf(line, sizeof line, "%-28s %10s %10s %9s %9s\n", head, "Enc. (M)", "MACs (G)", "val acc", "tok err");
  o << line << std::string(70, '-') << '\n';
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-28s %10.3f %10.3f %9.4f %9.4f\n", r.label.c_str(), r.encoder_params / 1e6,
                  r.macs / 1e9, r.val_acc, r.token_error);
    o << line;
  }
  o << "MACs at 10 s input; accuracy is teacher-forced on the toy validation set, token error from greedy decoding.\n";
  return o.str();
}

}  // namespace ebf
