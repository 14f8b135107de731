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
#include <span>
#include <string>
#include <vector>

#include "ebf/rng.hpp"
#include "ebf/tensor.hpp"

namespace ebf {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;
};

struct MelConfig {
  int sample_rate = 16000;
  int window = 512;  // 32 ms
  int hop = 160;     // 10 ms
  int num_mels = 80;
  double floor = 1e-10;
};

// n_fft: next power of two >= window.
int fft_size_for(int window);
std::int64_t num_frames(std::int64_t num_samples, const MelConfig& cfg = {});

double hz_to_mel(double hz);
double mel_to_hz(double mel);
// Triangular HTK-mel filters from 0 Hz to Nyquist: [num_mels, n_fft/2 + 1].
std::vector<std::vector<double>> mel_filterbank(const MelConfig& cfg = {});
// Center frequency of filter m in Hz.
double mel_center_hz(int m, const MelConfig& cfg = {});

// [T, num_mels] natural-log mel energies of the Hann-windowed magnitude STFT.
Tensor log_mel(const Waveform& w, const MelConfig& cfg = {});

struct SpecAugmentConfig {
  int num_freq_masks = 2;
  int freq_param_F = 27;
  int num_time_masks = 10;
  double time_param_p = 0.05;

  void validate(int num_bins = 80) const;
};

// Returns a masked copy of features [T, F].
Tensor spec_augment(const Tensor& features, const SpecAugmentConfig& cfg, Rng& rng);

// Mono 16-bit little-endian PCM RIFF/WAVE.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& w);

}  // namespace ebf
