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

#include "ebf/ebf.h"

#include <cstdlib>
#include <cstring>
#include <iostream>
#include <new>
#include <sstream>
#include <string>

#include "ebf/checkpoint.hpp"
#include "ebf/config.hpp"
#include "ebf/error.hpp"
#include "ebf/gradcheck.hpp"
#include "ebf/model.hpp"
#include "ebf/profiler.hpp"
#include "ebf/recipes.hpp"
#include "json.hpp"

struct ebf_config {
  ebf::ModelConfig cfg;
};

struct ebf_model {
  ebf::AsrModel model;
};

namespace {

thread_local std::string g_last_error;

ebf_status to_status(ebf::Errc c) {
  switch (c) {
    case ebf::Errc::kShape: return EBF_ERR_SHAPE;
    case ebf::Errc::kConfig: return EBF_ERR_CONFIG;
    case ebf::Errc::kValue: return EBF_ERR_VALUE;
    case ebf::Errc::kFormat: return EBF_ERR_FORMAT;
    case ebf::Errc::kTruncated: return EBF_ERR_TRUNCATED;
    case ebf::Errc::kNameMismatch: return EBF_ERR_NAME_MISMATCH;
    case ebf::Errc::kIo: return EBF_ERR_IO;
    case ebf::Errc::kNumeric: return EBF_ERR_NUMERIC;
    case ebf::Errc::kInternal: return EBF_ERR_INTERNAL;
  }
  return EBF_ERR_INTERNAL;
}

template <class F>
ebf_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return EBF_OK;
  } catch (const ebf::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown exception";
  }
  return EBF_ERR_INTERNAL;
}

ebf_status bad_argument(const char* what) {
  g_last_error = std::string("null argument: ") + what;
  return EBF_ERR_ARGUMENT;
}

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

}  // namespace

extern "C" {

const char* ebf_last_error(void) { return g_last_error.c_str(); }

const char* ebf_status_name(ebf_status s) {
  switch (s) {
    case EBF_OK: return "ok";
    case EBF_ERR_SHAPE: return "shape";
    case EBF_ERR_CONFIG: return "config";
    case EBF_ERR_VALUE: return "value";
    case EBF_ERR_FORMAT: return "format";
    case EBF_ERR_TRUNCATED: return "truncated";
    case EBF_ERR_NAME_MISMATCH: return "name_mismatch";
    case EBF_ERR_IO: return "io";
    case EBF_ERR_NUMERIC: return "numeric";
    case EBF_ERR_INTERNAL: return "internal";
    case EBF_ERR_ARGUMENT: return "argument";
  }
  return "unknown";
}

void ebf_string_free(char* s) { std::free(s); }

ebf_status ebf_config_load(const char* path, ebf_config** out) {
  if (!path) return bad_argument("path");
  if (!out) return bad_argument("out");
  *out = nullptr;
  return guarded([&] { *out = new ebf_config{ebf::load_config(path)}; });
}

ebf_status ebf_config_parse(const char* json_text, ebf_config** out) {
  if (!json_text) return bad_argument("json_text");
  if (!out) return bad_argument("out");
  *out = nullptr;
  return guarded([&] { *out = new ebf_config{ebf::parse_config(json_text)}; });
}

ebf_status ebf_config_to_json(const ebf_config* cfg, char** out) {
  if (!cfg) return bad_argument("cfg");
  if (!out) return bad_argument("out");
  return guarded([&] { *out = dup(ebf::config_to_json(cfg->cfg)); });
}

void ebf_config_free(ebf_config* cfg) { delete cfg; }

ebf_status ebf_model_create(const ebf_config* cfg, uint64_t seed, ebf_model** out) {
  if (!cfg) return bad_argument("cfg");
  if (!out) return bad_argument("out");
  *out = nullptr;
  return guarded([&] {
    ebf::Rng rng(seed);
    *out = new ebf_model{ebf::AsrModel(cfg->cfg.resolved(), rng)};
  });
}

void ebf_model_free(ebf_model* model) { delete model; }

ebf_status ebf_model_param_count(const ebf_model* model, int64_t* total, int64_t* encoder) {
  if (!model) return bad_argument("model");
  return guarded([&] {
    const ebf::ProfileReport r = ebf::count_params(model->model.params());
    if (total) *total = r.total_params;
    if (encoder) *encoder = r.encoder_params;
  });
}

ebf_status ebf_model_save(const ebf_model* model, const char* path) {
  if (!model) return bad_argument("model");
  if (!path) return bad_argument("path");
  return guarded([&] { ebf::save_checkpoint(path, ebf::snapshot(model->model.params())); });
}

ebf_status ebf_model_load(ebf_model* model, const char* path) {
  if (!model) return bad_argument("model");
  if (!path) return bad_argument("path");
  return guarded([&] {
    ebf::ParamList params = model->model.params();
    ebf::restore(ebf::load_checkpoint(path), params);
  });
}

ebf_status ebf_report_params(const ebf_config* cfg, int json, char** out) {
  if (!cfg) return bad_argument("cfg");
  if (!out) return bad_argument("out");
  return guarded([&] {
    ebf::Rng rng(0);
    const ebf::AsrModel model(cfg->cfg.resolved(), rng);
    *out = dup(ebf::format_report(ebf::count_params(model.params()), json != 0));
  });
}

ebf_status ebf_report_macs(const ebf_config* cfg, double input_seconds, int json, char** out) {
  if (!cfg) return bad_argument("cfg");
  if (!out) return bad_argument("out");
  return guarded([&] {
    if (!(input_seconds > 0.0)) ebf::fail(ebf::Errc::kValue, "input_seconds must be positive");
    const ebf::ModelConfig c = cfg->cfg.resolved();
    *out = dup(ebf::format_report(ebf::estimate_macs(c.encoder, input_seconds), json != 0));
  });
}

ebf_status ebf_gradcheck(const ebf_config* cfg, uint64_t seed, int json, int* all_passed, char** report) {
  if (!cfg) return bad_argument("cfg");
  return guarded([&] {
    ebf::GradcheckOptions opts;
    opts.seed = seed;
    const auto results = ebf::run_gradcheck_suite(cfg->cfg.resolved().encoder, opts);
    bool ok = !results.empty();
    for (const auto& r : results) ok = ok && r.passed;
    if (all_passed) *all_passed = ok ? 1 : 0;
    if (!report) return;
    std::ostringstream o;
    if (json) {
      nlohmann::json j;
      j["tolerance"] = opts.tolerance;
      j["step"] = opts.h;
      j["passed"] = ok;
      j["cases"] = nlohmann::json::array();
      for (const auto& r : results)
        j["cases"].push_back({{"name", r.name},
                              {"max_rel_error", r.max_rel_error},
                              {"worst_param", r.worst_param},
                              {"elements", r.elements},
                              {"passed", r.passed}});
      o << j.dump(2) << '\n';
    } else {
      char line[200];
      std::snprintf(line, sizeof line, "%-34s %12s %-44s %8s\n", "case", "max rel err", "worst leaf", "elements");
      o << line;
      for (const auto& r : results) {
        std::snprintf(line, sizeof line, "%-34s %12.3e %-44s %8lld %s\n", r.name.c_str(), r.max_rel_error,
                      r.worst_param.c_str(), static_cast<long long>(r.elements), r.passed ? "ok" : "FAIL");
        o << line;
      }
      o << (ok ? "all cases within " : "some cases exceed ") << opts.tolerance << '\n';
    }
    *report = dup(o.str());
  });
}

ebf_status ebf_train_toy(const ebf_config* cfg, const char* out_dir, int verbose, char** summary_json) {
  if (!cfg) return bad_argument("cfg");
  if (!out_dir) return bad_argument("out_dir");
  return guarded([&] {
    const ebf::ToyRunSummary s = ebf::run_toy_recipe(cfg->cfg, out_dir, verbose ? &std::cerr : nullptr);
    if (!summary_json) return;
    nlohmann::json j{{"val_acc", s.val_acc},
                     {"token_error", s.token_error},
                     {"best_val_acc", s.best_val_acc},
                     {"steps", s.steps},
                     {"seconds", s.seconds},
                     {"params", s.params},
                     {"averaged", s.averaged_path},
                     {"checkpoints", s.checkpoint_paths}};
    *summary_json = dup(j.dump(2) + "\n");
  });
}

void ebf_decode_options_default(ebf_decode_options* opts) {
  if (!opts) return;
  const ebf::FusionWeights w;
  opts->beam_size = w.beam_size;
  opts->ctc_weight = w.ctc_weight;
  opts->lambda_ilm = w.lambda_ilm;
  opts->lambda_elm = w.lambda_elm;
}

ebf_status ebf_decode(const ebf_config* cfg, const char* checkpoint, const char* input,
                      const ebf_decode_options* opts, int json, char** out) {
  if (!cfg) return bad_argument("cfg");
  if (!checkpoint) return bad_argument("checkpoint");
  if (!input) return bad_argument("input");
  if (!out) return bad_argument("out");
  return guarded([&] {
    ebf::FusionWeights w;
    if (opts) {
      w.beam_size = opts->beam_size;
      w.ctc_weight = opts->ctc_weight;
      w.lambda_ilm = opts->lambda_ilm;
      w.lambda_elm = opts->lambda_elm;
    }
    const ebf::LoadedModel m = ebf::load_model(cfg->cfg, ebf::load_checkpoint(checkpoint));
    *out = dup(ebf::format_decode(ebf::decode_input(m, input, w), w, json != 0));
  });
}

ebf_status ebf_average(const char* const* paths, size_t count, const double* scores, size_t top_k,
                       const char* out_path) {
  if (!paths) return bad_argument("paths");
  if (!out_path) return bad_argument("out_path");
  for (size_t i = 0; i < count; ++i)
    if (!paths[i]) return bad_argument("paths[i]");
  return guarded([&] {
    if (count == 0) ebf::fail(ebf::Errc::kValue, "no checkpoints to average");
    std::vector<ebf::Checkpoint> ckpts;
    std::vector<double> s(count, 0.0);
    for (size_t i = 0; i < count; ++i) {
      ckpts.push_back(ebf::load_checkpoint(paths[i]));
      if (scores) s[i] = scores[i];
    }
    ebf::save_checkpoint(out_path, ebf::average_checkpoints(ckpts, s, top_k == 0 ? count : top_k));
  });
}

ebf_status ebf_ablate(const ebf_config* cfg, const char* sweep, int steps, int json, int verbose, char** out) {
  if (!cfg) return bad_argument("cfg");
  if (!sweep) return bad_argument("sweep");
  if (!out) return bad_argument("out");
  return guarded([&] {
    const auto rows = ebf::run_ablation(cfg->cfg, sweep, steps, verbose ? &std::cerr : nullptr);
    *out = dup(ebf::format_ablation(rows, sweep, json != 0));
  });
}

}  // extern "C"
