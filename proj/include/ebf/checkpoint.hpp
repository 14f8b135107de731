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
#include <string>
#include <vector>

#include "ebf/nn.hpp"

namespace ebf {

// File layout (all integers u64 little-endian):
//   "EBFCKPT1" | count | repeat count: name_len name rank dims[rank] f32[numel]
struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  std::vector<CheckpointEntry> entries;
};

Checkpoint snapshot(const ParamList& params);
// Copies values into params. Name sets must match exactly (kNameMismatch);
// shapes must agree (kShape).
void restore(const Checkpoint& ckpt, ParamList& params);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
// kIo if unreadable, kFormat on bad magic, kTruncated on short payload.
Checkpoint load_checkpoint(const std::string& path);
std::uint64_t checkpoint_file_size(const Checkpoint& ckpt);

// Mean of the top-k checkpoints by score; ties go to the later step. When
// steps is empty the list position stands in for the step.
Checkpoint average_checkpoints(const std::vector<Checkpoint>& ckpts, const std::vector<double>& scores,
                               std::size_t k, const std::vector<std::int64_t>& steps = {});

}  // namespace ebf
