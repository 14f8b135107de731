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

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ebf/ebf.h"

namespace {

struct ConfigDeleter {
  void operator()(ebf_config* c) const { ebf_config_free(c); }
};
using ConfigPtr = std::unique_ptr<ebf_config, ConfigDeleter>;

int report(ebf_status s, const char* what) {
  std::fprintf(stderr, "ebf-cli: %s failed (%s): %s\n", what, ebf_status_name(s), ebf_last_error());
  return 1;
}

bool load(const std::string& path, ConfigPtr& out, int& rc) {
  ebf_config* raw = nullptr;
  const ebf_status s = ebf_config_load(path.c_str(), &raw);
  if (s != EBF_OK) {
    rc = report(s, "loading config");
    return false;
  }
  out.reset(raw);
  return true;
}

int emit(ebf_status s, char** text, const char* what) {
  if (s != EBF_OK) return report(s, what);
  std::fputs(*text, stdout);
  ebf_string_free(*text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"E-Branchformer toolkit: profiling, gradient checks, toy training and decoding"};
  app.require_subcommand(1);
  app.fallthrough();
  bool json = false;
  app.add_flag("--json", json, "machine-readable output");

  std::string config_path;

  auto* params = app.add_subcommand("params", "parameter report");
  params->add_option("config", config_path, "model config (JSON)")->required()->check(CLI::ExistingFile);

  double seconds = 10.0;
  auto* macs = app.add_subcommand("macs", "multiply-accumulate report");
  macs->add_option("config", config_path, "model config (JSON)")->required()->check(CLI::ExistingFile);
  macs->add_option("--seconds", seconds, "dummy input length in seconds")->check(CLI::PositiveNumber);

  std::uint64_t seed = 0;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  grad->add_option("config", config_path, "model config (JSON)")->required()->check(CLI::ExistingFile);
  grad->add_option("--seed", seed, "seed for the random test instances");

  std::string out_path;
  bool quiet = false;
  auto* train = app.add_subcommand("train-toy", "train the toy recipe");
  train->add_option("config", config_path, "model config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out_path, "output directory")->required();
  train->add_flag("--quiet", quiet, "no progress on stderr");

  std::string ckpt, input;
  ebf_decode_options dopts;
  ebf_decode_options_default(&dopts);
  auto* decode = app.add_subcommand("decode", "beam search on one utterance");
  decode->add_option("config", config_path, "model config (JSON)")->required()->check(CLI::ExistingFile);
  decode->add_option("--ckpt", ckpt, "checkpoint")->required();
  decode->add_option("--input", input, "wav file, 'toy' or 'toy:<seed>'")->required();
  decode->add_option("--beam", dopts.beam_size, "beam size")->check(CLI::PositiveNumber);
  decode->add_option("--ctc-weight", dopts.ctc_weight, "CTC prefix score weight")->check(CLI::Range(0.0, 1.0));
  decode->add_option("--lambda-ilm", dopts.lambda_ilm, "internal LM weight (subtracted)");
  decode->add_option("--lambda-elm", dopts.lambda_elm, "external LM weight");

  std::vector<std::string> ckpts;
  std::vector<double> scores;
  std::size_t top_k = 0;
  auto* avg = app.add_subcommand("average", "average checkpoints");
  avg->add_option("--out", out_path, "output checkpoint")->required();
  avg->add_option("ckpts", ckpts, "input checkpoints")->required()->check(CLI::ExistingFile);
  avg->add_option("--scores", scores, "validation score per checkpoint")->delimiter(',');
  avg->add_option("--top-k", top_k, "keep the k best by score (0: all)");

  std::string sweep;
  int steps = 300;
  auto* ablate = app.add_subcommand("ablate", "merge-module ablation on the toy task");
  ablate->add_option("config", config_path, "model config (JSON)")->required()->check(CLI::ExistingFile);
  ablate->add_option("--sweep", sweep, "sweep")->required()->check(CLI::IsMember({"merge_variant", "merge_kernel"}));
  ablate->add_option("--steps", steps, "training steps per row")->check(CLI::PositiveNumber);
  ablate->add_flag("--quiet", quiet, "no progress on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  int rc = 0;
  ConfigPtr cfg;
  char* text = nullptr;
  if (*params) {
    if (!load(config_path, cfg, rc)) return rc;
    return emit(ebf_report_params(cfg.get(), json, &text), &text, "params");
  }
  if (*macs) {
    if (!load(config_path, cfg, rc)) return rc;
    return emit(ebf_report_macs(cfg.get(), seconds, json, &text), &text, "macs");
  }
  if (*grad) {
    if (!load(config_path, cfg, rc)) return rc;
    int ok = 0;
    const ebf_status s = ebf_gradcheck(cfg.get(), seed, json, &ok, &text);
    if (s != EBF_OK) return report(s, "gradcheck");
    std::fputs(text, stdout);
    ebf_string_free(text);
    return ok ? 0 : 1;
  }
  if (*train) {
    if (!load(config_path, cfg, rc)) return rc;
    return emit(ebf_train_toy(cfg.get(), out_path.c_str(), quiet ? 0 : 1, &text), &text, "train-toy");
  }
  if (*decode) {
    if (!load(config_path, cfg, rc)) return rc;
    return emit(ebf_decode(cfg.get(), ckpt.c_str(), input.c_str(), &dopts, json, &text), &text, "decode");
  }
  if (*avg) {
    if (!scores.empty() && scores.size() != ckpts.size()) {
      std::fprintf(stderr, "ebf-cli: --scores needs one value per checkpoint\n%s", app.help().c_str());
      return 2;
    }
    std::vector<const char*> paths;
    for (const auto& p : ckpts) paths.push_back(p.c_str());
    const ebf_status s = ebf_average(paths.data(), paths.size(), scores.empty() ? nullptr : scores.data(), top_k,
                                     out_path.c_str());
    if (s != EBF_OK) return report(s, "average");
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
  }
  if (*ablate) {
    if (!load(config_path, cfg, rc)) return rc;
    return emit(ebf_ablate(cfg.get(), sweep.c_str(), steps, json, quiet ? 0 : 1, &text), &text, "ablate");
  }
  return 2;
}
