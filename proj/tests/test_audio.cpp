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

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "ebf/audio.hpp"
#include "ebf/error.hpp"
#include "support.hpp"

using namespace ebf;

namespace {

Waveform tone(double hz, int samples, double amp = 0.5) {
  Waveform w;
  for (int i = 0; i < samples; ++i) w.samples.push_back(amp * std::sin(2 * std::numbers::pi * hz * i / 16000.0));
  return w;
}

std::string tmp_path(const char* name) { return (std::filesystem::temp_directory_path() / name).string(); }

Errc error_code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::kInternal;
}

}  // namespace

TEST_CASE("HTK mel scale") {
  CHECK(hz_to_mel(0.0) == 0.0);
  CHECK(hz_to_mel(1000.0) == doctest::Approx(999.985).epsilon(1e-6));
  for (double hz : {50.0, 440.0, 3000.0, 7999.0}) CHECK(mel_to_hz(hz_to_mel(hz)) == doctest::Approx(hz));
}

TEST_CASE("frame count and FFT size") {
  CHECK(fft_size_for(512) == 512);
  CHECK(fft_size_for(400) == 512);
  CHECK(num_frames(16000) == 97);
  CHECK(num_frames(511) == 0);
  CHECK(num_frames(512) == 1);
}

TEST_CASE("filterbank triangles are nonnegative, peak at most one, ascend") {
  const auto fb = mel_filterbank();
  REQUIRE(fb.size() == 80);
  int prev_peak = -1;
  for (const auto& row : fb) {
    REQUIRE(row.size() == 257);
    double mx = 0;
    int arg = 0;
    for (std::size_t k = 0; k < row.size(); ++k) {
      CHECK(row[k] >= 0.0);
      if (row[k] > mx) mx = row[k], arg = static_cast<int>(k);
    }
    CHECK(mx <= 1.0);
    CHECK(arg >= prev_peak);
    prev_peak = arg;
  }
}

TEST_CASE("log_mel frame matches a direct DFT") {
  Rng rng(2);
  Waveform w;
  for (int i = 0; i < 1200; ++i) w.samples.push_back(0.3 * rng.normal());
  const Tensor m = log_mel(w);
  REQUIRE(m.shape() == Shape{num_frames(1200), 80});
  const auto fb = mel_filterbank();
  for (int frame : {0, 3}) {
    std::vector<double> mag(257);
    for (int k = 0; k < 257; ++k) {
      std::complex<double> acc = 0;
      for (int n = 0; n < 512; ++n) {
        const double hann = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * n / 512);
        acc += hann * w.samples[frame * 160 + n] * std::polar(1.0, -2 * std::numbers::pi * k * n / 512);
      }
      mag[k] = std::abs(acc);
    }
    for (int b = 0; b < 80; ++b) {
      double e = 0;
      for (int k = 0; k < 257; ++k) e += fb[b][k] * mag[k];
      CHECK(m.at({frame, b}) == doctest::Approx(std::log(std::max(e, 1e-10))).epsilon(1e-9));
    }
  }
}

TEST_CASE("tone energy peaks at the mel bin centered on it") {
  for (int bin : {20, 40, 60}) {
    const Tensor m = log_mel(tone(mel_center_hz(bin), 4000));
    int arg = 0;
    for (int b = 1; b < 80; ++b)
      if (m.at({10, b}) > m.at({10, arg})) arg = b;
    CHECK(arg == bin);
  }
}

TEST_CASE("silence hits the log floor") {
  Waveform w;
  w.samples.assign(1000, 0.0);
  const Tensor m = log_mel(w);
  for (double v : m.data()) CHECK(v == std::log(1e-10));
  Waveform short_w;
  short_w.samples.assign(100, 0.0);
  CHECK(error_code_of([&] { log_mel(short_w); }) == Errc::kValue);
}

TEST_CASE("wav round trip within 16-bit quantization") {
  const Waveform w = tone(440.0, 3000, 0.8);
  const std::string p = tmp_path("ebf_test_roundtrip.wav");
  write_wav(p, w);
  const Waveform r = read_wav(p);
  CHECK(r.sample_rate == 16000);
  REQUIRE(r.samples.size() == w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i) CHECK(std::abs(r.samples[i] - w.samples[i]) <= 1.0 / 32767);
  CHECK(std::filesystem::file_size(p) == 44 + 2 * 3000);
}

TEST_CASE("wav reader rejects broken files with distinct codes") {
  const std::string p = tmp_path("ebf_test_broken.wav");
  write_wav(p, tone(440.0, 1000));
  std::filesystem::resize_file(p, 44 + 500);
  CHECK(error_code_of([&] { read_wav(p); }) == Errc::kTruncated);
  {
    std::ofstream f(p, std::ios::binary);
    f << "RIFX0000WAVEjunkjunk";
  }
  CHECK(error_code_of([&] { read_wav(p); }) == Errc::kFormat);
  CHECK(error_code_of([&] { read_wav(tmp_path("ebf_no_such_file.wav")); }) == Errc::kIo);
}

TEST_CASE("spec_augment only zeroes bounded bands and leaves its input alone") {
  Rng rng(12);
  Tensor x = ebf::testing::randn({100, 80}, rng);
  for (auto& v : x.data_mut()) v = std::abs(v) + 1.0;  // never zero
  const Tensor before = x.detach();
  SpecAugmentConfig cfg;
  cfg.num_freq_masks = 2;
  cfg.freq_param_F = 10;
  cfg.num_time_masks = 3;
  cfg.time_param_p = 0.05;
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor y = spec_augment(x, cfg, rng);
    CHECK(ebf::testing::bitwise_equal(x, before));
    int zero_cols = 0, zero_rows = 0;
    for (int b = 0; b < 80; ++b) {
      bool all = true;
      for (int t = 0; t < 100; ++t) all = all && y.at({t, b}) == 0.0;
      zero_cols += all;
    }
    for (int t = 0; t < 100; ++t) {
      bool all = true;
      for (int b = 0; b < 80; ++b) all = all && y.at({t, b}) == 0.0;
      zero_rows += all;
    }
    CHECK(zero_cols <= 2 * 10);
    CHECK(zero_rows <= 3 * 5);
    for (int t = 0; t < 100; ++t)
      for (int b = 0; b < 80; ++b)
        if (y.at({t, b}) != 0.0) CHECK(y.at({t, b}) == x.at({t, b}));
  }
  SpecAugmentConfig off{0, 0, 0, 0.0};
  CHECK(ebf::testing::bitwise_equal(spec_augment(x, off, rng), x));
  SpecAugmentConfig bad = cfg;
  bad.freq_param_F = 81;
  CHECK(error_code_of([&] { spec_augment(x, bad, rng); }) == Errc::kConfig);
}
