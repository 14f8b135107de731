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

#include "ebf/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ebf {
namespace {

using nlohmann::json;

class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    check(j_.is_object(), Errc::kConfig, "config: '" + name_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        check(it->is_boolean(), Errc::kConfig, "expected boolean");
      } else if constexpr (std::is_integral_v<T>) {
        check(it->is_number_integer(), Errc::kConfig, "expected integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        check(it->is_number(), Errc::kConfig, "expected number");
      } else {
        check(it->is_string(), Errc::kConfig, "expected string");
      }
      out = it->get<T>();
    } catch (const std::exception& e) {
      fail(Errc::kConfig, "config: " + name_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      check(seen_.count(it.key()) != 0, Errc::kConfig, "config: unknown key '" + name_ + "." + it.key() + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

EncoderConfig parse_encoder(const json& j) {
  EncoderConfig c;
  Section s(j, "encoder");
  std::string ffn = std::string(to_string(c.ffn_style)), merge = std::string(to_string(c.merge.kind));
  std::string block = std::string(to_string(c.block_type));
  s.get("input_dim", c.input_dim);
  s.get("d", c.d);
  s.get("num_layers", c.num_layers);
  s.get("heads", c.heads);
  s.get("d_inter_cgmlp", c.d_inter_cgmlp);
  s.get("d_ffn", c.d_ffn);
  s.get("ffn_style", ffn);
  s.get("merge_variant", merge);
  s.get("merge_global_weight", c.merge.global_weight);
  s.get("merge_local_weight", c.merge.local_weight);
  s.get("block_type", block);
  s.get("cgmlp_kernel", c.cgmlp_kernel);
  s.get("merge_kernel", c.merge_kernel);
  s.get("merge_kernel_secondary", c.merge_kernel_secondary);
  s.get("se_bottleneck", c.se_bottleneck);
  s.get("conv_module_kernel", c.conv_module_kernel);
  s.get("dropout", c.dropout);
  s.get("layer_dropout", c.layer_dropout);
  s.finish();
  c.ffn_style = parse_ffn_style(ffn);
  c.merge.kind = parse_merge_kind(merge);
  c.block_type = parse_block_type(block);
  return c;
}

DecoderConfig parse_decoder(const json& j) {
  DecoderConfig c;
  Section s(j, "decoder");
  s.get("layers", c.layers);
  s.get("heads", c.heads);
  s.get("d_ffn", c.d_ffn);
  s.get("dropout", c.dropout);
  s.get("max_positions", c.max_positions);
  s.finish();
  return c;
}

TrainConfig parse_training(const json& j) {
  TrainConfig c;
  Section s(j, "training");
  s.get("ctc_weight", c.ctc_weight);
  s.get("label_smoothing", c.label_smoothing);
  s.get("beta1", c.beta1);
  s.get("beta2", c.beta2);
  s.get("eps", c.eps);
  s.get("weight_decay", c.weight_decay);
  s.get("warmup_steps", c.warmup_steps);
  s.get("peak_lr", c.peak_lr);
  s.get("total_steps", c.total_steps);
  s.get("average_top_k", c.average_top_k);
  s.get("batch_size", c.batch_size);
  s.get("val_interval", c.val_interval);
  s.get("log_interval", c.log_interval);
  s.get("grad_clip", c.grad_clip);
  s.get("target_val_acc", c.target_val_acc);
  s.get("spec_augment", c.spec_augment);
  s.get("seed", c.seed);
  s.finish();
  return c;
}

SpecAugmentConfig parse_spec_augment(const json& j) {
  SpecAugmentConfig c;
  Section s(j, "spec_augment");
  s.get("num_freq_masks", c.num_freq_masks);
  s.get("freq_param_F", c.freq_param_F);
  s.get("num_time_masks", c.num_time_masks);
  s.get("time_param_p", c.time_param_p);
  s.finish();
  return c;
}

ToyTaskConfig parse_toy(const json& j) {
  ToyTaskConfig c;
  Section s(j, "toy");
  s.get("num_train", c.num_train);
  s.get("num_val", c.num_val);
  s.get("min_len", c.min_len);
  s.get("max_len", c.max_len);
  s.get("seed", c.seed);
  s.get("lm_steps", c.lm_steps);
  s.finish();
  return c;
}

// Either a list of regular tokens or {"size": N} for N synthetic tokens.
Vocabulary parse_vocab(const json& j) {
  if (j.is_array()) {
    std::vector<std::string> regular;
    for (const auto& t : j) {
      check(t.is_string(), Errc::kConfig, "config: vocab entries must be strings");
      regular.push_back(t.get<std::string>());
    }
    return Vocabulary::with_regular(regular);
  }
  Section s(j, "vocab");
  int size = 0;
  s.get("size", size);
  s.finish();
  check(size >= 1, Errc::kConfig, "config: vocab.size must be >= 1");
  return Vocabulary::toy(size);
}

}  // namespace

ModelConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(Errc::kConfig, std::string("config: invalid JSON: ") + e.what());
  }
  ModelConfig cfg;
  Section s(j, "<root>");
  std::string description;
  s.get("description", description);
  if (const json* e = s.child("encoder")) cfg.encoder = parse_encoder(*e);
  if (const json* d = s.child("decoder")) cfg.decoder = parse_decoder(*d);
  if (const json* t = s.child("training")) cfg.training = parse_training(*t);
  if (const json* a = s.child("spec_augment")) cfg.spec_augment = parse_spec_augment(*a);
  if (const json* t = s.child("toy")) cfg.toy = parse_toy(*t);
  if (const json* v = s.child("vocab")) cfg.vocab = parse_vocab(*v);
  s.finish();
  return cfg.resolved();
}

ModelConfig load_config(const std::string& path) {
  std::ifstream f(path);
  check(f.good(), Errc::kIo, "cannot open config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.what());
  }
}

std::string config_to_json(const ModelConfig& cfg, int indent) {
  json j;
  const EncoderConfig& e = cfg.encoder;
  j["encoder"] = {{"input_dim", e.input_dim},
                  {"d", e.d},
                  {"num_layers", e.num_layers},
                  {"heads", e.heads},
                  {"d_inter_cgmlp", e.d_inter_cgmlp},
                  {"d_ffn", e.d_ffn},
                  {"ffn_style", std::string(to_string(e.ffn_style))},
                  {"merge_variant", std::string(to_string(e.merge.kind))},
                  {"merge_global_weight", e.merge.global_weight},
                  {"merge_local_weight", e.merge.local_weight},
                  {"block_type", std::string(to_string(e.block_type))},
                  {"cgmlp_kernel", e.cgmlp_kernel},
                  {"merge_kernel", e.merge_kernel},
                  {"merge_kernel_secondary", e.merge_kernel_secondary},
                  {"se_bottleneck", e.se_bottleneck},
                  {"conv_module_kernel", e.conv_module_kernel},
                  {"dropout", e.dropout},
                  {"layer_dropout", e.layer_dropout}};
  const DecoderConfig& d = cfg.decoder;
  j["decoder"] = {{"layers", d.layers}, {"heads", d.heads}, {"d_ffn", d.d_ffn}, {"dropout", d.dropout},
                  {"max_positions", d.max_positions}};
  const TrainConfig& t = cfg.training;
  j["training"] = {{"ctc_weight", t.ctc_weight},     {"label_smoothing", t.label_smoothing},
                   {"beta1", t.beta1},               {"beta2", t.beta2},
                   {"eps", t.eps},                   {"weight_decay", t.weight_decay},
                   {"warmup_steps", t.warmup_steps}, {"peak_lr", t.peak_lr},
                   {"total_steps", t.total_steps},   {"average_top_k", t.average_top_k},
                   {"batch_size", t.batch_size},     {"val_interval", t.val_interval},
                   {"log_interval", t.log_interval}, {"grad_clip", t.grad_clip},
                   {"target_val_acc", t.target_val_acc}, {"spec_augment", t.spec_augment},
                   {"seed", t.seed}};
  const SpecAugmentConfig& a = cfg.spec_augment;
  j["spec_augment"] = {{"num_freq_masks", a.num_freq_masks}, {"freq_param_F", a.freq_param_F},
                       {"num_time_masks", a.num_time_masks}, {"time_param_p", a.time_param_p}};
  const ToyTaskConfig& y = cfg.toy;
  j["toy"] = {{"num_train", y.num_train}, {"num_val", y.num_val}, {"min_len", y.min_len},
              {"max_len", y.max_len},     {"seed", y.seed},       {"lm_steps", y.lm_steps}};
  std::vector<std::string> regular;
  for (std::int64_t i = 0; i < cfg.vocab.size(); ++i)
    if (cfg.vocab.is_regular(i)) regular.push_back(cfg.vocab.tokens[static_cast<std::size_t>(i)]);
  const auto n = static_cast<int>(regular.size());
  if (cfg.vocab.tokens == Vocabulary::toy(n).tokens) {
    j["vocab"] = {{"size", n}};
  } else {
    j["vocab"] = regular;
  }
  return j.dump(indent);
}

}  // namespace ebf
