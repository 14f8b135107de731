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

#include "ebf/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>

#include "ebf/error.hpp"

namespace ebf {
namespace {

constexpr char kMagic[8] = {'E', 'B', 'F', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

class Reader {
 public:
  Reader(std::vector<unsigned char> buf, std::string path) : buf_(std::move(buf)), path_(std::move(path)) {}

  void need(std::uint64_t n) const {
    check(n <= buf_.size() - pos_, Errc::kTruncated,
          path_ + ": truncated at byte " + std::to_string(pos_) + " (need " + std::to_string(n) + " more)");
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  const unsigned char* take(std::uint64_t n) {
    need(n);
    const unsigned char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  std::vector<unsigned char> buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint snapshot(const ParamList& params) {
  Checkpoint c;
  c.entries.reserve(params.size());
  for (const auto& p : params) {
    CheckpointEntry e{p.name, p.tensor.shape(), {}};
    const auto d = p.tensor.data();
    e.values.assign(d.begin(), d.end());
    c.entries.push_back(std::move(e));
  }
  return c;
}

void restore(const Checkpoint& ckpt, ParamList& params) {
  std::map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : ckpt.entries) by_name[e.name] = &e;
  check(by_name.size() == params.size(), Errc::kNameMismatch,
        "checkpoint has " + std::to_string(by_name.size()) + " parameters, model has " +
            std::to_string(params.size()));
  for (auto& p : params) {
    auto it = by_name.find(p.name);
    check(it != by_name.end(), Errc::kNameMismatch, "checkpoint lacks parameter '" + p.name + "'");
    check(it->second->shape == p.tensor.shape(), Errc::kShape,
          "parameter '" + p.name + "': checkpoint shape " + shape_str(it->second->shape) + " vs model " +
              shape_str(p.tensor.shape()));
    auto dst = p.tensor.data_mut();
    std::copy(it->second->values.begin(), it->second->values.end(), dst.begin());
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");
  std::ofstream os(path, std::ios::binary);
  check(os.good(), Errc::kIo, "cannot write " + path);
  os.write(kMagic, 8);
  put_u64(os, ckpt.entries.size());
  for (const auto& e : ckpt.entries) {
    put_u64(os, e.name.size());
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_u64(os, e.shape.size());
    for (auto d : e.shape) put_u64(os, static_cast<std::uint64_t>(d));
    os.write(reinterpret_cast<const char*>(e.values.data()), static_cast<std::streamsize>(4 * e.values.size()));
  }
  check(os.good(), Errc::kIo, "write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), Errc::kIo, "cannot open " + path);
  Reader r(std::vector<unsigned char>((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>()), path);
  r.need(8);
  check(std::memcmp(r.take(8), kMagic, 8) == 0, Errc::kFormat, path + ": bad magic, not an EBFCKPT1 file");
  const std::uint64_t count = r.u64();
  Checkpoint c;
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const std::uint64_t name_len = r.u64();
    const unsigned char* name = r.take(name_len);
    e.name.assign(reinterpret_cast<const char*>(name), name_len);
    const std::uint64_t rank = r.u64();
    check(rank <= 8, Errc::kFormat, path + ": implausible rank for '" + e.name + "'");
    std::uint64_t numel = 1;
    for (std::uint64_t k = 0; k < rank; ++k) {
      const std::uint64_t d = r.u64();
      check(d >= 1 && d < (1ULL << 40), Errc::kFormat, path + ": bad dimension for '" + e.name + "'");
      e.shape.push_back(static_cast<std::int64_t>(d));
      numel *= d;
    }
    const unsigned char* payload = r.take(4 * numel);
    e.values.resize(numel);
    std::memcpy(e.values.data(), payload, 4 * numel);
    c.entries.push_back(std::move(e));
  }
  check(r.done(), Errc::kFormat, path + ": trailing bytes after last parameter");
  return c;
}

std::uint64_t checkpoint_file_size(const Checkpoint& ckpt) {
  std::uint64_t n = 16;
  for (const auto& e : ckpt.entries) n += 8 + e.name.size() + 8 + 8 * e.shape.size() + 4 * e.values.size();
  return n;
}

Checkpoint average_checkpoints(const std::vector<Checkpoint>& ckpts, const std::vector<double>& scores,
                               std::size_t k, const std::vector<std::int64_t>& steps) {
  check(!ckpts.empty(), Errc::kValue, "average_checkpoints: no checkpoints");
  check(scores.size() == ckpts.size(), Errc::kValue, "average_checkpoints: one score per checkpoint required");
  check(steps.empty() || steps.size() == ckpts.size(), Errc::kValue, "average_checkpoints: steps size mismatch");
  check(k >= 1, Errc::kValue, "average_checkpoints: k must be >= 1");
  std::vector<std::size_t> order(ckpts.size());
  std::iota(order.begin(), order.end(), 0);
  auto step_of = [&](std::size_t i) { return steps.empty() ? static_cast<std::int64_t>(i) : steps[i]; };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return step_of(a) > step_of(b);
  });
  order.resize(std::min(k, order.size()));

  const Checkpoint& ref = ckpts[order[0]];
  std::vector<std::map<std::string, const CheckpointEntry*>> lookup;
  for (auto i : order) {
    std::map<std::string, const CheckpointEntry*> m;
    for (const auto& e : ckpts[i].entries) m[e.name] = &e;
    check(m.size() == ref.entries.size(), Errc::kNameMismatch, "average_checkpoints: parameter sets differ");
    lookup.push_back(std::move(m));
  }
  Checkpoint out;
  for (const auto& e : ref.entries) {
    std::vector<double> acc(e.values.size(), 0.0);
    for (const auto& m : lookup) {
      auto it = m.find(e.name);
      check(it != m.end(), Errc::kNameMismatch, "average_checkpoints: '" + e.name + "' missing in one checkpoint");
      check(it->second->shape == e.shape, Errc::kShape, "average_checkpoints: shape mismatch for '" + e.name + "'");
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += it->second->values[j];
    }
    CheckpointEntry avg{e.name, e.shape, std::vector<float>(acc.size())};
    const auto n = static_cast<double>(lookup.size());
    for (std::size_t j = 0; j < acc.size(); ++j) avg.values[j] = static_cast<float>(acc[j] / n);
    out.entries.push_back(std::move(avg));
  }
  return out;
}

}  // namespace ebf
