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

#include "ebf/profiler.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "json.hpp"

namespace ebf {
namespace {

using I = std::int64_t;

I lin(I in, I out, bool bias = true) { return in * out + (bias ? out : 0); }
I ln(I d) { return 2 * d; }
I dw(I c, I k) { return c * k + c; }

I ffn_p(I d, I f) { return ln(d) + lin(d, f) + lin(f, d); }
I attn_p(I d) { return ln(d) + 4 * lin(d, d) + lin(d, d, false) + 2 * d; }
I cgmlp_p(I d, I di, I k) { return ln(d) + lin(d, di) + ln(di / 2) + dw(di / 2, k) + lin(di / 2, d); }
I convmod_p(I c, I k) { return ln(c) + lin(c, 2 * c) + dw(c, k) + ln(c) + lin(c, c); }

I merge_p(const EncoderConfig& c) {
  const I d = c.d, c2 = 2 * c.d;
  switch (c.merge.kind) {
    case MergeKind::kWeightedAverage: return 0;
    case MergeKind::kConcatProj:
    case MergeKind::kConvModuleExternal: return lin(c2, d);
    case MergeKind::kDepthConv: return dw(c2, c.merge_kernel) + lin(c2, d);
    case MergeKind::kMultiKernel: return dw(c2, c.merge_kernel) + dw(c2, c.merge_kernel_secondary) + lin(c2, d);
    case MergeKind::kDepthConvSE:
      return dw(c2, c.merge_kernel) + lin(c2, c.se_bottleneck) + lin(c.se_bottleneck, c2) + lin(c2, d);
    case MergeKind::kConvModuleInternal: return convmod_p(c2, c.conv_module_kernel) + lin(c2, d);
  }
  return 0;
}

double attn_macs(double T, double d) {
  return 4 * T * d * d + (2 * T - 1) * d * d + T * T * d + T * (2 * T - 1) * d + T * T * d;
}
double ffn_macs(double T, double d, double f) { return 2 * T * d * f; }
double cgmlp_macs(double T, double d, double di, double k) { return T * d * di + T * (di / 2) * k + T * (di / 2) * d; }
double convmod_macs(double T, double c, double k) { return T * c * 2 * c + T * c * k + T * c * c; }

double merge_macs(const EncoderConfig& c, double T) {
  const double d = c.d, c2 = 2.0 * c.d, proj = T * c2 * d;
  switch (c.merge.kind) {
    case MergeKind::kWeightedAverage: return 0;
    case MergeKind::kConcatProj:
    case MergeKind::kConvModuleExternal: return proj;
    case MergeKind::kDepthConv: return T * c2 * c.merge_kernel + proj;
    case MergeKind::kMultiKernel: return T * c2 * (c.merge_kernel + c.merge_kernel_secondary) + proj;
    case MergeKind::kDepthConvSE: return T * c2 * c.merge_kernel + 2.0 * c2 * c.se_bottleneck + proj;
    case MergeKind::kConvModuleInternal: return convmod_macs(T, c2, c.conv_module_kernel) + proj;
  }
  return 0;
}

struct Part {
  const char* name;
  I params;
  double macs;
};

std::vector<Part> block_parts(const EncoderConfig& c, double T) {
  const I d = c.d;
  std::vector<Part> parts;
  const bool conformer = c.block_type == BlockType::kConformer;
  if (conformer || c.ffn_style == FfnStyle::kMacaron)
    parts.push_back({"ffn_macaron", ffn_p(d, c.d_ffn), ffn_macs(T, d, c.d_ffn)});
  parts.push_back({"global", attn_p(d), attn_macs(T, d)});
  if (!conformer) {
    parts.push_back({"local", cgmlp_p(d, c.d_inter_cgmlp, c.cgmlp_kernel),
                     cgmlp_macs(T, d, c.d_inter_cgmlp, c.cgmlp_kernel)});
    parts.push_back({"merge", merge_p(c), merge_macs(c, T)});
  }
  if (conformer || c.merge.kind == MergeKind::kConvModuleExternal)
    parts.push_back({"conv_module", convmod_p(d, c.conv_module_kernel), convmod_macs(T, d, c.conv_module_kernel)});
  if (conformer || c.ffn_style != FfnStyle::kNone) parts.push_back({"ffn", ffn_p(d, c.d_ffn), ffn_macs(T, d, c.d_ffn)});
  parts.push_back({"norm_final", ln(d), 0.0});
  return parts;
}

std::string fmt_count(double v, double unit, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f%s", v / unit, suffix);
  return buf;
}

}  // namespace

std::string module_group(const std::string& name) {
  std::vector<std::string> parts;
  std::stringstream ss(name);
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  if (parts.size() >= 4 && parts[0] == "encoder" && parts[1] == "blocks") return "encoder.blocks.*." + parts[3];
  if (parts.size() >= 2 && parts[0] == "encoder") return "encoder." + parts[1];
  return parts.empty() ? name : parts[0];
}

ProfileReport count_params(const ParamList& params) {
  ProfileReport r;
  std::map<std::string, std::size_t> row_of;
  for (const auto& p : params) {
    const std::string g = module_group(p.name);
    auto it = row_of.find(g);
    if (it == row_of.end()) {
      it = row_of.emplace(g, r.rows.size()).first;
      r.rows.push_back({g, 0, 0.0});
    }
    r.rows[it->second].params += p.tensor.numel();
  }
  for (const auto& row : r.rows) {
    r.total_params += row.params;
    if (row.name.rfind("encoder.", 0) == 0) r.encoder_params += row.params;
  }
  return r;
}

std::int64_t frontend_params(const EncoderConfig& cfg) {
  const EncoderConfig c = cfg.resolved();
  const I d = c.d, f2 = subsampled_length(c.input_dim);
  return (9 * d + d) + (9 * d * d + d) + lin(d * f2, d);
}

std::int64_t block_params(const EncoderConfig& cfg) {
  I n = 0;
  for (const auto& p : block_parts(cfg.resolved(), 0.0)) n += p.params;
  return n;
}

std::int64_t encoder_params(const EncoderConfig& cfg) {
  const EncoderConfig c = cfg.resolved();
  return frontend_params(c) + c.num_layers * block_params(c) + ln(c.d);
}

ProfileReport estimate_macs(const EncoderConfig& cfg, double input_seconds) {
  check(input_seconds > 0.0, Errc::kValue, "estimate_macs: input length must be positive");
  const EncoderConfig c = cfg.resolved();
  c.validate();
  ProfileReport r;
  r.input_seconds = input_seconds;
  r.frames = static_cast<I>(std::llround(input_seconds * 100.0));
  check(r.frames >= 7, Errc::kValue, "estimate_macs: input shorter than 7 frames");
  const I t1 = (r.frames - 3) / 2 + 1, f1 = (c.input_dim - 3) / 2 + 1;
  r.encoder_frames = subsampled_length(r.frames);
  const I f2 = subsampled_length(c.input_dim);
  const double T = static_cast<double>(r.encoder_frames), d = c.d;
  const double front = static_cast<double>(t1) * f1 * d * 9 + T * f2 * d * d * 9 + T * (d * f2) * d;
  r.rows.push_back({"encoder.embed", frontend_params(c), front});
  for (const auto& p : block_parts(c, T))
    r.rows.push_back({std::string("encoder.blocks.*.") + p.name, c.num_layers * p.params, c.num_layers * p.macs});
  r.rows.push_back({"encoder.after_norm", ln(c.d), 0.0});
  for (const auto& row : r.rows) {
    r.total_params += row.params;
    r.total_macs += row.macs;
  }
  r.encoder_params = r.total_params;
  return r;
}

std::string format_report(const ProfileReport& r, bool json) {
  const bool with_macs = r.input_seconds > 0.0;
  if (json) {
    nlohmann::json j;
    j["rows"] = nlohmann::json::array();
    for (const auto& row : r.rows) {
      nlohmann::json e{{"name", row.name}, {"params", row.params}};
      if (with_macs) e["macs"] = row.macs;
      j["rows"].push_back(e);
    }
    j["total_params"] = r.total_params;
    j["encoder_params"] = r.encoder_params;
    if (with_macs) {
      j["total_macs"] = r.total_macs;
      j["input_seconds"] = r.input_seconds;
      j["frames"] = r.frames;
      j["encoder_frames"] = r.encoder_frames;
    }
    return j.dump(2) + "\n";
  }
  std::ostringstream os;
  char line[160];
  if (with_macs) {
    std::snprintf(line, sizeof line, "# input %.2f s = %lld frames -> %lld encoder frames\n", r.input_seconds,
                  static_cast<long long>(r.frames), static_cast<long long>(r.encoder_frames));
    os << line;
    std::snprintf(line, sizeof line, "%-34s %14s %10s %14s\n", "module", "params", "(M)", "MACs (G)");
  } else {
    std::snprintf(line, sizeof line, "%-34s %14s %10s\n", "module", "params", "(M)");
  }
  os << line;
  auto emit = [&](const std::string& name, I params, double macs) {
    if (with_macs) {
      std::snprintf(line, sizeof line, "%-34s %14lld %10s %14s\n", name.c_str(), static_cast<long long>(params),
                    fmt_count(static_cast<double>(params), 1e6, "").c_str(), fmt_count(macs, 1e9, "").c_str());
    } else {
      std::snprintf(line, sizeof line, "%-34s %14lld %10s\n", name.c_str(), static_cast<long long>(params),
                    fmt_count(static_cast<double>(params), 1e6, "").c_str());
    }
    os << line;
  };
  for (const auto& row : r.rows) emit(row.name, row.params, row.macs);
  if (r.encoder_params != r.total_params) emit("encoder total", r.encoder_params, r.total_macs);
  emit("total", r.total_params, r.total_macs);
  return os.str();
}

}  // namespace ebf
