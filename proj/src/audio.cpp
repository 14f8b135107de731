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

#include "ebf/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>

#include "ebf/error.hpp"

namespace ebf {
namespace {

// FFTW planning is not thread-safe; execution on distinct buffers is.
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

struct FftPlan {
  int n;
  double* in;
  fftw_complex* out;
  fftw_plan plan;

  explicit FftPlan(int size) : n(size) {
    std::lock_guard<std::mutex> lock(plan_mutex());
    in = fftw_alloc_real(static_cast<std::size_t>(n));
    out = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    plan = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
  }
  ~FftPlan() {
    std::lock_guard<std::mutex> lock(plan_mutex());
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;
};

std::uint32_t rd32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t rd16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

}  // namespace

int fft_size_for(int window) {
  int n = 1;
  while (n < window) n <<= 1;
  return n;
}

std::int64_t num_frames(std::int64_t num_samples, const MelConfig& cfg) {
  if (num_samples < cfg.window) return 0;
  return 1 + (num_samples - cfg.window) / cfg.hop;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

double mel_center_hz(int m, const MelConfig& cfg) {
  const double top = hz_to_mel(cfg.sample_rate / 2.0);
  return mel_to_hz(top * (m + 1) / (cfg.num_mels + 1));
}

std::vector<std::vector<double>> mel_filterbank(const MelConfig& cfg) {
  const int n_fft = fft_size_for(cfg.window);
  const int bins = n_fft / 2 + 1;
  const double top = hz_to_mel(cfg.sample_rate / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(cfg.num_mels + 2));
  for (int i = 0; i < cfg.num_mels + 2; ++i) edges[i] = mel_to_hz(top * i / (cfg.num_mels + 1));
  std::vector<std::vector<double>> fb(static_cast<std::size_t>(cfg.num_mels), std::vector<double>(bins, 0.0));
  for (int m = 0; m < cfg.num_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / n_fft;
      if (f > lo && f < hi) fb[m][k] = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
    }
  }
  return fb;
}

Tensor log_mel(const Waveform& w, const MelConfig& cfg) {
  check(w.sample_rate == cfg.sample_rate, Errc::kValue,
        "log_mel: sample rate " + std::to_string(w.sample_rate) + " != " + std::to_string(cfg.sample_rate));
  const std::int64_t frames = num_frames(static_cast<std::int64_t>(w.samples.size()), cfg);
  check(frames >= 1, Errc::kValue,
        "log_mel: need at least " + std::to_string(cfg.window) + " samples, got " +
            std::to_string(w.samples.size()));
  const int n_fft = fft_size_for(cfg.window);
  const int bins = n_fft / 2 + 1;
  const auto fb = mel_filterbank(cfg);

  // Periodic Hann.
  std::vector<double> hann(static_cast<std::size_t>(cfg.window));
  for (int i = 0; i < cfg.window; ++i) hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / cfg.window);

  FftPlan fft(n_fft);
  std::vector<double> mag(static_cast<std::size_t>(bins));
  Tensor out({frames, cfg.num_mels});
  auto o = out.data_mut();
  for (std::int64_t t = 0; t < frames; ++t) {
    const double* src = w.samples.data() + t * cfg.hop;
    for (int i = 0; i < n_fft; ++i) fft.in[i] = i < cfg.window ? src[i] * hann[i] : 0.0;
    fftw_execute(fft.plan);
    for (int k = 0; k < bins; ++k) mag[k] = std::hypot(fft.out[k][0], fft.out[k][1]);
    for (int m = 0; m < cfg.num_mels; ++m) {
      double e = 0.0;
      for (int k = 0; k < bins; ++k) e += fb[m][k] * mag[k];
      o[t * cfg.num_mels + m] = std::log(std::max(e, cfg.floor));
    }
  }
  return out;
}

void SpecAugmentConfig::validate(int num_bins) const {
  check(num_freq_masks >= 0 && num_time_masks >= 0, Errc::kConfig, "spec_augment: negative mask count");
  check(freq_param_F >= 0 && freq_param_F <= num_bins, Errc::kConfig, "spec_augment: F must be in [0, bins]");
  check(time_param_p >= 0.0 && time_param_p <= 1.0, Errc::kConfig, "spec_augment: p must be in [0, 1]");
}

Tensor spec_augment(const Tensor& features, const SpecAugmentConfig& cfg, Rng& rng) {
  check(features.rank() == 2, Errc::kShape, "spec_augment expects [T, F], got " + shape_str(features.shape()));
  const std::int64_t t_len = features.dim(0), bins = features.dim(1);
  cfg.validate(static_cast<int>(bins));
  Tensor out(features.shape(), std::vector<double>(features.data().begin(), features.data().end()));
  auto o = out.data_mut();
  for (int i = 0; i < cfg.num_freq_masks; ++i) {
    const std::int64_t f = rng.uniform_int(0, cfg.freq_param_F);
    const std::int64_t f0 = rng.uniform_int(0, bins - f);
    for (std::int64_t t = 0; t < t_len; ++t)
      for (std::int64_t k = f0; k < f0 + f; ++k) o[t * bins + k] = 0.0;
  }
  const auto max_width = static_cast<std::int64_t>(std::floor(cfg.time_param_p * static_cast<double>(t_len)));
  for (int i = 0; i < cfg.num_time_masks; ++i) {
    const std::int64_t width = rng.uniform_int(0, max_width);
    const std::int64_t t0 = rng.uniform_int(0, t_len - width);
    for (std::int64_t t = t0; t < t0 + width; ++t)
      std::fill(o.begin() + t * bins, o.begin() + (t + 1) * bins, 0.0);
  }
  return out;
}

Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), Errc::kIo, "cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  check(buf.size() >= 12 && std::memcmp(buf.data(), "RIFF", 4) == 0 && std::memcmp(buf.data() + 8, "WAVE", 4) == 0,
        Errc::kFormat, path + ": not a RIFF/WAVE file");
  Waveform w;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::uint32_t size = rd32(&buf[pos + 4]);
    const unsigned char* body = &buf[pos + 8];
    check(pos + 8 + size <= buf.size(), Errc::kTruncated, path + ": chunk runs past end of file");
    if (std::memcmp(&buf[pos], "fmt ", 4) == 0) {
      check(size >= 16, Errc::kFormat, path + ": short fmt chunk");
      const std::uint16_t format = rd16(body), channels = rd16(body + 2), bits = rd16(body + 14);
      check(format == 1 && channels == 1 && bits == 16, Errc::kFormat,
            path + ": only mono 16-bit PCM is supported");
      w.sample_rate = static_cast<int>(rd32(body + 4));
      have_fmt = true;
    } else if (std::memcmp(&buf[pos], "data", 4) == 0) {
      check(have_fmt, Errc::kFormat, path + ": data chunk before fmt chunk");
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i)
        w.samples[i] = static_cast<std::int16_t>(rd16(body + 2 * i)) / 32768.0;
      return w;
    }
    pos += 8 + size + (size & 1);
  }
  fail(Errc::kFormat, path + ": no data chunk");
}

void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream f(path, std::ios::binary);
  check(f.good(), Errc::kIo, "cannot write " + path);
  auto put32 = [&](std::uint32_t v) { for (int i = 0; i < 4; ++i) f.put(static_cast<char>((v >> (8 * i)) & 0xff)); };
  auto put16 = [&](std::uint16_t v) { f.put(static_cast<char>(v & 0xff)); f.put(static_cast<char>(v >> 8)); };
  const auto data_bytes = static_cast<std::uint32_t>(2 * w.samples.size());
  f.write("RIFF", 4);
  put32(36 + data_bytes);
  f.write("WAVEfmt ", 8);
  put32(16);
  put16(1);
  put16(1);
  put32(static_cast<std::uint32_t>(w.sample_rate));
  put32(static_cast<std::uint32_t>(w.sample_rate * 2));
  put16(2);
  put16(16);
  f.write("data", 4);
  put32(data_bytes);
  for (double s : w.samples) {
    const double c = std::clamp(s, -1.0, 32767.0 / 32768.0);
    put16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32768.0))));
  }
}

}  // namespace ebf
