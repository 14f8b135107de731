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

#include "ebf/ops.hpp"

#include <Eigen/Core>
#include <array>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

namespace ebf {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

// Eigen picks its vectorised loop bounds from operand addresses, so the
// rounding of a product depends on where malloc put the buffers. Staging
// every operand at a 64-byte boundary makes results reproducible.
constexpr std::uintptr_t kAlign = 64;

struct Staging {
  std::vector<double> buf;
  double* fit(std::size_t n) {
    buf.resize(n + kAlign / sizeof(double));
    auto addr = reinterpret_cast<std::uintptr_t>(buf.data());
    return buf.data() + ((kAlign - addr % kAlign) % kAlign) / sizeof(double);
  }
};

bool aligned(const double* p) { return reinterpret_cast<std::uintptr_t>(p) % kAlign == 0; }

const double* staged(const double* p, std::size_t n, Staging& s) {
  if (aligned(p)) return p;
  double* q = s.fit(n);
  std::copy(p, p + n, q);
  return q;
}

// c (m x n) = or += op(a) * op(b), row-major; op transposes when asked.
void gemm(double* c, const double* a, const double* b, std::int64_t m, std::int64_t k, std::int64_t n, bool ta,
          bool tb, bool accumulate) {
  thread_local Staging sa, sb, sc;
  const auto mk = static_cast<std::size_t>(m * k), kn = static_cast<std::size_t>(k * n),
             mn = static_cast<std::size_t>(m * n);
  a = staged(a, mk, sa);
  b = staged(b, kn, sb);
  double* dst = aligned(c) ? c : sc.fit(mn);
  if (dst != c && accumulate) std::copy(c, c + mn, dst);
  MMap out(dst, m, n);
  const CMap am(a, ta ? k : m, ta ? m : k), bm(b, tb ? n : k, tb ? k : n);
  if (accumulate) {
    if (ta && tb) out.noalias() += am.transpose() * bm.transpose();
    else if (ta) out.noalias() += am.transpose() * bm;
    else if (tb) out.noalias() += am * bm.transpose();
    else out.noalias() += am * bm;
  } else {
    if (ta && tb) out.noalias() = am.transpose() * bm.transpose();
    else if (ta) out.noalias() = am.transpose() * bm;
    else if (tb) out.noalias() = am * bm.transpose();
    else out.noalias() = am * bm;
  }
  if (dst != c) std::copy(dst, dst + mn, c);
}

using detail::input_grad;
using detail::make_result;
using detail::Node;

int norm_axis(int axis, int rank) {
  const int a = axis < 0 ? axis + rank : axis;
  check(a >= 0 && a < rank, Errc::kShape,
        "axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  return a;
}

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    check(da == db || da == 1 || db == 1, Errc::kShape,
          "shapes " + shape_str(a) + " and " + shape_str(b) + " do not broadcast");
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of a contiguous `in` tensor expressed over the dims of `out`
// (0 where `in` is broadcast).
std::vector<std::int64_t> broadcast_strides(const Shape& in, const Shape& out) {
  const std::size_t r = out.size();
  std::vector<std::int64_t> strides(r, 0);
  std::int64_t stride = 1;
  for (std::size_t k = in.size(); k-- > 0;) {
    const std::size_t d = k + (r - in.size());
    strides[d] = in[k] == 1 && out[d] != 1 ? 0 : stride;
    stride *= in[k];
  }
  return strides;
}

std::vector<std::int64_t> contiguous_strides(const Shape& s) {
  std::vector<std::int64_t> strides(s.size(), 1);
  for (std::size_t k = s.size(); k-- > 1;) strides[k - 1] = strides[k] * s[k];
  return strides;
}

// Calls f(out_index, a_offset, b_offset) for every element of `out`.
template <class F>
void for_each_strided(const Shape& out, const std::vector<std::int64_t>& sa,
                      const std::vector<std::int64_t>& sb, F&& f) {
  const int r = static_cast<int>(out.size());
  const std::int64_t n = numel_of(out);
  if (r == 0) {
    f(0, 0, 0);
    return;
  }
  std::vector<std::int64_t> idx(static_cast<std::size_t>(r), 0);
  const std::int64_t inner = out[r - 1];
  const std::int64_t ia = sa[r - 1], ib = sb[r - 1];
  std::int64_t oa = 0, ob = 0;
  for (std::int64_t o = 0; o < n; o += inner) {
    for (std::int64_t j = 0; j < inner; ++j) f(o + j, oa + j * ia, ob + j * ib);
    for (int d = r - 2; d >= 0; --d) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < out[d]) break;
      oa -= sa[d] * out[d];
      ob -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

template <class Fwd, class GradA, class GradB>
Tensor binary_op(const Tensor& a, const Tensor& b, Fwd fwd, GradA grad_a, GradB grad_b) {
  const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  std::vector<double> out(static_cast<std::size_t>(numel_of(out_shape)));
  const auto ad = a.data();
  const auto bd = b.data();
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(ad[i], bd[i]);
    return make_result(out_shape, std::move(out), {a, b}, [grad_a, grad_b](Node& self) {
      const auto& av = self.inputs[0]->data;
      const auto& bv = self.inputs[1]->data;
      auto ga = input_grad(self, 0);
      auto gb = input_grad(self, 1);
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (!ga.empty()) ga[i] += grad_a(av[i], bv[i], self.grad[i]);
        if (!gb.empty()) gb[i] += grad_b(av[i], bv[i], self.grad[i]);
      }
    });
  }
  const auto sa = broadcast_strides(a.shape(), out_shape);
  const auto sb = broadcast_strides(b.shape(), out_shape);
  for_each_strided(out_shape, sa, sb, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
    out[o] = fwd(ad[ia], bd[ib]);
  });
  return make_result(out_shape, std::move(out), {a, b},
                     [grad_a, grad_b, out_shape, sa, sb](Node& self) {
                       const auto& av = self.inputs[0]->data;
                       const auto& bv = self.inputs[1]->data;
                       auto ga = input_grad(self, 0);
                       auto gb = input_grad(self, 1);
                       const auto& g = self.grad;
                       for_each_strided(out_shape, sa, sb,
                                        [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
                                          if (!ga.empty()) ga[ia] += grad_a(av[ia], bv[ib], g[o]);
                                          if (!gb.empty()) gb[ib] += grad_b(av[ia], bv[ib], g[o]);
                                        });
                     });
}

// Element-wise map; `deriv(x, y)` gives dy/dx.
template <class Fwd, class Deriv>
Tensor unary_op(const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xd[i]);
  return make_result(x.shape(), std::move(out), {x}, [deriv](Node& self) {
    auto gx = input_grad(self, 0);
    const auto& xv = self.inputs[0]->data;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx[i] += self.grad[i] * deriv(xv[i], self.data[i]);
    }
  });
}

inline double sigmoid_scalar(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x + y; },
      [](double, double, double g) { return g; }, [](double, double, double g) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x - y; },
      [](double, double, double g) { return g; }, [](double, double, double g) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x * y; },
      [](double, double y, double g) { return g * y; },
      [](double x, double, double g) { return g * x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary_op(
      a, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary_op(
      a, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.rank() >= 2 && b.rank() >= 2, Errc::kShape,
        "matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
            shape_str(b.shape()));
  const std::int64_t m = a.dim(-2), k = a.dim(-1), kb = b.dim(-2), n = b.dim(-1);
  check(k == kb, Errc::kShape,
        "matmul inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));

  if (b.rank() == 2) {
    // Fold all leading dims of a into the row count: one GEMM.
    const std::int64_t rows = a.numel() / k;
    Shape out_shape = a.shape();
    out_shape.back() = n;
    std::vector<double> out(static_cast<std::size_t>(rows * n));
    gemm(out.data(), a.data().data(), b.data().data(), rows, k, n, false, false, false);
    return make_result(std::move(out_shape), std::move(out), {a, b}, [rows, k, n](Node& self) {
      const double* g = self.grad.data();
      auto ga = input_grad(self, 0);
      auto gb = input_grad(self, 1);
      if (!ga.empty()) {
        gemm(ga.data(), g, self.inputs[1]->data.data(), rows, n, k, false, true, true);
      }
      if (!gb.empty()) {
        gemm(gb.data(), self.inputs[0]->data.data(), g, k, rows, n, true, false, true);
      }
    });
  }

  const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  const Shape batch = broadcast_shapes(batch_a, batch_b);
  std::vector<std::array<std::int64_t, 3>> triples;
  triples.reserve(static_cast<std::size_t>(numel_of(batch)));
  for_each_strided(batch, broadcast_strides(batch_a, batch), broadcast_strides(batch_b, batch),
                   [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
                     triples.push_back({o, ia, ib});
                   });
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> out(static_cast<std::size_t>(numel_of(out_shape)));
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  for (const auto& [o, ia, ib] : triples) {
    gemm(out.data() + o * m * n, ap + ia * m * k, bp + ib * k * n, m, k, n, false, false, false);
  }
  return make_result(std::move(out_shape), std::move(out), {a, b},
                     [triples = std::move(triples), m, k, n](Node& self) {
                       auto ga = input_grad(self, 0);
                       auto gb = input_grad(self, 1);
                       const double* av = self.inputs[0]->data.data();
                       const double* bv = self.inputs[1]->data.data();
                       for (const auto& [o, ia, ib] : triples) {
                         const double* g = self.grad.data() + o * m * n;
                         if (!ga.empty()) {
                           gemm(ga.data() + ia * m * k, g, bv + ib * k * n, m, n, k, false, true, true);
                         }
                         if (!gb.empty()) {
                           gemm(gb.data() + ib * k * n, av + ia * m * k, g, k, m, n, true, false, true);
                         }
                       }
                     });
}

Tensor transpose(const Tensor& x, int axis0, int axis1) {
  const int r = x.rank();
  const int a0 = norm_axis(axis0, r), a1 = norm_axis(axis1, r);
  if (a0 == a1) return x;
  Shape out_shape = x.shape();
  std::swap(out_shape[a0], out_shape[a1]);
  auto in_strides = contiguous_strides(x.shape());
  std::swap(in_strides[a0], in_strides[a1]);
  const std::vector<std::int64_t> zeros(static_cast<std::size_t>(r), 0);
  std::vector<double> out(x.data().size());
  const auto xd = x.data();
  for_each_strided(out_shape, in_strides, zeros,
                   [&](std::int64_t o, std::int64_t i, std::int64_t) { out[o] = xd[i]; });
  return make_result(out_shape, std::move(out), {x}, [out_shape, in_strides, zeros](Node& self) {
    auto gx = input_grad(self, 0);
    for_each_strided(out_shape, in_strides, zeros,
                     [&](std::int64_t o, std::int64_t i, std::int64_t) { gx[i] += self.grad[o]; });
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  std::int64_t known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      check(infer < 0, Errc::kShape, "reshape: more than one -1");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0) {
    check(known > 0 && x.numel() % known == 0, Errc::kShape,
          "reshape: cannot infer dim for " + shape_str(x.shape()) + " -> " + shape_str(shape));
    shape[static_cast<std::size_t>(infer)] = x.numel() / known;
  }
  check(numel_of(shape) == x.numel(), Errc::kShape,
        "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    auto gx = input_grad(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t length) {
  const int a = norm_axis(axis, x.rank());
  const std::int64_t extent = x.dim(a);
  check(start >= 0 && length > 0 && start + length <= extent, Errc::kShape,
        "slice [" + std::to_string(start) + ", +" + std::to_string(length) + ") out of range for " +
            shape_str(x.shape()));
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < a; ++i) outer *= x.dim(i);
  for (int i = a + 1; i < x.rank(); ++i) inner *= x.dim(i);
  Shape out_shape = x.shape();
  out_shape[a] = length;
  std::vector<double> out(static_cast<std::size_t>(outer * length * inner));
  const auto xd = x.data();
  for (std::int64_t o = 0; o < outer; ++o) {
    std::copy_n(xd.begin() + (o * extent + start) * inner, length * inner,
                out.begin() + o * length * inner);
  }
  return make_result(std::move(out_shape), std::move(out), {x},
                     [outer, extent, start, length, inner](Node& self) {
                       auto gx = input_grad(self, 0);
                       for (std::int64_t o = 0; o < outer; ++o) {
                         const double* g = self.grad.data() + o * length * inner;
                         double* dst = gx.data() + (o * extent + start) * inner;
                         for (std::int64_t i = 0; i < length * inner; ++i) dst[i] += g[i];
                       }
                     });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  check(!parts.empty(), Errc::kShape, "concat of zero tensors");
  const int r = parts[0].rank();
  const int a = norm_axis(axis, r);
  Shape out_shape = parts[0].shape();
  out_shape[a] = 0;
  std::vector<std::int64_t> extents;
  for (const auto& p : parts) {
    check(p.rank() == r, Errc::kShape, "concat rank mismatch");
    for (int i = 0; i < r; ++i) {
      check(i == a || p.dim(i) == parts[0].dim(i), Errc::kShape,
            "concat: " + shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
    }
    extents.push_back(p.dim(a));
    out_shape[a] += p.dim(a);
  }
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < a; ++i) outer *= out_shape[i];
  for (int i = a + 1; i < r; ++i) inner *= out_shape[i];
  const std::int64_t total = out_shape[a];
  std::vector<double> out(static_cast<std::size_t>(numel_of(out_shape)));
  std::int64_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto pd = parts[p].data();
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy_n(pd.begin() + o * extents[p] * inner, extents[p] * inner,
                  out.begin() + (o * total + offset) * inner);
    }
    offset += extents[p];
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result(std::move(out_shape), std::move(out), std::move(inputs),
                     [extents, outer, inner, total](Node& self) {
                       std::int64_t offset = 0;
                       for (std::size_t p = 0; p < extents.size(); ++p) {
                         auto gp = input_grad(self, p);
                         if (!gp.empty()) {
                           for (std::int64_t o = 0; o < outer; ++o) {
                             const double* g = self.grad.data() + (o * total + offset) * inner;
                             double* dst = gp.data() + o * extents[p] * inner;
                             for (std::int64_t i = 0; i < extents[p] * inner; ++i) dst[i] += g[i];
                           }
                         }
                         offset += extents[p];
                       }
                     });
}

Tensor sum(const Tensor& x) {
  const auto xd = x.data();
  double total = 0.0;
  for (double v : xd) total += v;
  return make_result(Shape{}, {total}, {x}, [](Node& self) {
    auto gx = input_grad(self, 0);
    const double g = self.grad[0];
    for (auto& v : gx) v += g;
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::int64_t d = x.dim(-1);
  check(gain.numel() == d && bias.numel() == d, Errc::kShape,
        "layer_norm: gain/bias " + shape_str(gain.shape()) + " vs input " + shape_str(x.shape()));
  const std::int64_t rows = x.numel() / d;
  const auto xd = x.data();
  const auto gd = gain.data();
  const auto bd = bias.data();
  std::vector<double> out(xd.size());
  std::vector<double> xhat(xd.size());
  std::vector<double> inv_std(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * d;
    double mu = 0.0;
    for (std::int64_t i = 0; i < d; ++i) mu += row[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::int64_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::int64_t i = 0; i < d; ++i) {
      const double h = (row[i] - mu) * inv;
      xhat[r * d + i] = h;
      out[r * d + i] = h * gd[i] + bd[i];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gain, bias},
                     [d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       auto gx = input_grad(self, 0);
                       auto gg = input_grad(self, 1);
                       auto gb = input_grad(self, 2);
                       const auto& gain_v = self.inputs[1]->data;
                       const double inv_d = 1.0 / static_cast<double>(d);
                       for (std::int64_t r = 0; r < rows; ++r) {
                         const double* g = self.grad.data() + r * d;
                         const double* h = xhat.data() + r * d;
                         if (!gg.empty() || !gb.empty()) {
                           for (std::int64_t i = 0; i < d; ++i) {
                             if (!gg.empty()) gg[i] += g[i] * h[i];
                             if (!gb.empty()) gb[i] += g[i];
                           }
                         }
                         if (gx.empty()) continue;
                         double mean_dh = 0.0, mean_dh_h = 0.0;
                         for (std::int64_t i = 0; i < d; ++i) {
                           const double dh = g[i] * gain_v[i];
                           mean_dh += dh;
                           mean_dh_h += dh * h[i];
                         }
                         mean_dh *= inv_d;
                         mean_dh_h *= inv_d;
                         for (std::int64_t i = 0; i < d; ++i) {
                           const double dh = g[i] * gain_v[i];
                           gx[r * d + i] += inv_std[r] * (dh - mean_dh - h[i] * mean_dh_h);
                         }
                       }
                     });
}

Tensor softmax(const Tensor& x, const Tensor& mask) {
  const std::int64_t n = x.dim(-1);
  const std::int64_t rows = x.numel() / n;
  const auto xd = x.data();
  std::vector<std::uint8_t> keep;
  if (mask.defined()) {
    const Shape& xs = x.shape();
    check(broadcast_shapes(mask.shape(), xs) == xs, Errc::kShape,
          "softmax mask " + shape_str(mask.shape()) + " does not broadcast to " + shape_str(xs));
    keep.resize(xd.size());
    const auto md = mask.data();
    const std::vector<std::int64_t> zeros(xs.size(), 0);
    for_each_strided(xs, broadcast_strides(mask.shape(), xs), zeros,
                     [&](std::int64_t o, std::int64_t im, std::int64_t) { keep[o] = md[im] != 0.0; });
  }
  std::vector<double> out(xd.size(), 0.0);
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * n;
    double* y = out.data() + r * n;
    const std::uint8_t* k = keep.empty() ? nullptr : keep.data() + r * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int64_t i = 0; i < n; ++i) {
      if (!k || k[i]) mx = std::max(mx, row[i]);
    }
    check(mx != -std::numeric_limits<double>::infinity(), Errc::kValue,
          "softmax: row " + std::to_string(r) + " is fully masked");
    double z = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      if (!k || k[i]) {
        y[i] = std::exp(row[i] - mx);
        z += y[i];
      }
    }
    const double inv = 1.0 / z;
    for (std::int64_t i = 0; i < n; ++i) y[i] *= inv;
  }
  return make_result(x.shape(), std::move(out), {x}, [n, rows](Node& self) {
    auto gx = input_grad(self, 0);
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* y = self.data.data() + r * n;
      const double* g = self.grad.data() + r * n;
      double dot = 0.0;
      for (std::int64_t i = 0; i < n; ++i) dot += y[i] * g[i];
      for (std::int64_t i = 0; i < n; ++i) gx[r * n + i] += y[i] * (g[i] - dot);
    }
  });
}

Tensor log_softmax(const Tensor& x) {
  const std::int64_t n = x.dim(-1);
  const std::int64_t rows = x.numel() / n;
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::int64_t i = 0; i < n; ++i) z += std::exp(row[i] - mx);
    const double lse = mx + std::log(z);
    for (std::int64_t i = 0; i < n; ++i) out[r * n + i] = row[i] - lse;
  }
  return make_result(x.shape(), std::move(out), {x}, [n, rows](Node& self) {
    auto gx = input_grad(self, 0);
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* y = self.data.data() + r * n;
      const double* g = self.grad.data() + r * n;
      double total = 0.0;
      for (std::int64_t i = 0; i < n; ++i) total += g[i];
      for (std::int64_t i = 0; i < n; ++i) gx[r * n + i] += g[i] - std::exp(y[i]) * total;
    }
  });
}

Tensor gelu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
        const double pdf = std::exp(-0.5 * v * v) * (0.5 * M_2_SQRTPI * M_SQRT1_2);
        return cdf + v * pdf;
      });
}

Tensor swish(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v * sigmoid_scalar(v); },
      [](double v, double) {
        const double s = sigmoid_scalar(v);
        return s + v * s * (1.0 - s);
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, [](double v) { return sigmoid_scalar(v); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  check(x.rank() >= 2, Errc::kShape, "depthwise_conv1d expects [..., T, c], got " + shape_str(x.shape()));
  check(kernel.rank() == 2, Errc::kShape, "depthwise kernel must be [c, k]");
  const std::int64_t t_len = x.dim(-2), c = x.dim(-1), k = kernel.dim(1);
  check(kernel.dim(0) == c, Errc::kShape,
        "depthwise kernel " + shape_str(kernel.shape()) + " does not match input " + shape_str(x.shape()));
  check(k % 2 == 1, Errc::kConfig, "depthwise kernel size must be odd, got " + std::to_string(k));
  const bool has_bias = bias.defined();
  if (has_bias) check(bias.numel() == c, Errc::kShape, "depthwise bias size mismatch");
  const std::int64_t batch = x.numel() / (t_len * c);
  const std::int64_t pad = (k - 1) / 2;
  // Kernel transposed to [k, c] so the channel loop is contiguous.
  std::vector<double> kt(static_cast<std::size_t>(k * c));
  const auto kd = kernel.data();
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t j = 0; j < k; ++j) kt[j * c + ch] = kd[ch * k + j];
  const auto xd = x.data();
  std::vector<double> out(xd.size(), 0.0);
  for (std::int64_t b = 0; b < batch; ++b) {
    const double* xb = xd.data() + b * t_len * c;
    double* ob = out.data() + b * t_len * c;
    for (std::int64_t t = 0; t < t_len; ++t) {
      double* o = ob + t * c;
      if (has_bias) std::copy_n(bias.data().begin(), c, o);
      for (std::int64_t j = 0; j < k; ++j) {
        const std::int64_t src = t + j - pad;
        if (src < 0 || src >= t_len) continue;
        const double* xi = xb + src * c;
        const double* kj = kt.data() + j * c;
        for (std::int64_t ch = 0; ch < c; ++ch) o[ch] += kj[ch] * xi[ch];
      }
    }
  }
  std::vector<Tensor> inputs{x, kernel};
  if (has_bias) inputs.push_back(bias);
  return make_result(x.shape(), std::move(out), std::move(inputs),
                     [batch, t_len, c, k, pad, has_bias, kt = std::move(kt)](Node& self) {
                       auto gx = input_grad(self, 0);
                       auto gk = input_grad(self, 1);
                       auto gb = has_bias ? input_grad(self, 2) : std::span<double>();
                       const auto& xv = self.inputs[0]->data;
                       std::vector<double> gkt(gk.empty() ? 0 : static_cast<std::size_t>(k * c), 0.0);
                       for (std::int64_t b = 0; b < batch; ++b) {
                         const double* xb = xv.data() + b * t_len * c;
                         const double* gob = self.grad.data() + b * t_len * c;
                         for (std::int64_t t = 0; t < t_len; ++t) {
                           const double* g = gob + t * c;
                           if (!gb.empty())
                             for (std::int64_t ch = 0; ch < c; ++ch) gb[ch] += g[ch];
                           for (std::int64_t j = 0; j < k; ++j) {
                             const std::int64_t src = t + j - pad;
                             if (src < 0 || src >= t_len) continue;
                             if (!gx.empty()) {
                               double* dx = gx.data() + b * t_len * c + src * c;
                               const double* kj = kt.data() + j * c;
                               for (std::int64_t ch = 0; ch < c; ++ch) dx[ch] += g[ch] * kj[ch];
                             }
                             if (!gkt.empty()) {
                               const double* xi = xb + src * c;
                               double* dk = gkt.data() + j * c;
                               for (std::int64_t ch = 0; ch < c; ++ch) dk[ch] += g[ch] * xi[ch];
                             }
                           }
                         }
                       }
                       for (std::int64_t ch = 0; ch < c && !gk.empty(); ++ch)
                         for (std::int64_t j = 0; j < k; ++j) gk[ch * k + j] += gkt[j * c + ch];
                     });
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, int stride) {
  check(x.rank() == 4 && kernel.rank() == 4, Errc::kShape,
        "conv2d expects x[B,c,h,w] and kernel[o,c,kh,kw], got " + shape_str(x.shape()) + " and " +
            shape_str(kernel.shape()));
  const std::int64_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  check(kernel.dim(1) == cin, Errc::kShape,
        "conv2d channel mismatch: " + shape_str(x.shape()) + " vs " + shape_str(kernel.shape()));
  check(h >= kh && w >= kw, Errc::kShape,
        "conv2d input " + shape_str(x.shape()) + " smaller than kernel " + shape_str(kernel.shape()));
  check(stride >= 1, Errc::kConfig, "conv2d stride must be >= 1");
  const bool has_bias = bias.defined();
  if (has_bias) check(bias.numel() == cout, Errc::kShape, "conv2d bias size mismatch");
  const std::int64_t oh = (h - kh) / stride + 1, ow = (w - kw) / stride + 1;
  const std::int64_t patch = cin * kh * kw, positions = oh * ow;
  // im2col: cols[b] is [patch, positions].
  std::vector<double> cols(static_cast<std::size_t>(batch * patch * positions));
  const auto xd = x.data();
  for (std::int64_t b = 0; b < batch; ++b) {
    double* cb = cols.data() + b * patch * positions;
    for (std::int64_t ci = 0; ci < cin; ++ci)
      for (std::int64_t i = 0; i < kh; ++i)
        for (std::int64_t j = 0; j < kw; ++j) {
          double* row = cb + ((ci * kh + i) * kw + j) * positions;
          const double* plane = xd.data() + (b * cin + ci) * h * w;
          for (std::int64_t y = 0; y < oh; ++y)
            for (std::int64_t xx = 0; xx < ow; ++xx)
              row[y * ow + xx] = plane[(y * stride + i) * w + xx * stride + j];
        }
  }
  std::vector<double> out(static_cast<std::size_t>(batch * cout * positions));
  for (std::int64_t b = 0; b < batch; ++b) {
    double* ob = out.data() + b * cout * positions;
    gemm(ob, kernel.data().data(), cols.data() + b * patch * positions, cout, patch, positions, false, false, false);
    if (has_bias)
      for (std::int64_t c = 0; c < cout; ++c)
        for (std::int64_t p = 0; p < positions; ++p) ob[c * positions + p] += bias.data()[c];
  }
  std::vector<Tensor> inputs{x, kernel};
  if (has_bias) inputs.push_back(bias);
  return make_result(
      Shape{batch, cout, oh, ow}, std::move(out), std::move(inputs),
      [=, cols = std::move(cols)](Node& self) {
        auto gx = input_grad(self, 0);
        auto gk = input_grad(self, 1);
        auto gb = has_bias ? input_grad(self, 2) : std::span<double>();
        const double* wv = self.inputs[1]->data.data();
        std::vector<double> dcols(gx.empty() ? 0 : static_cast<std::size_t>(patch * positions));
        for (std::int64_t b = 0; b < batch; ++b) {
          const double* g = self.grad.data() + b * cout * positions;
          if (!gk.empty()) {
            gemm(gk.data(), g, cols.data() + b * patch * positions, cout, positions, patch, false, true, true);
          }
          if (!gb.empty()) {
            for (std::int64_t c = 0; c < cout; ++c) {
              double acc = 0.0;
              for (std::int64_t p = 0; p < positions; ++p) acc += g[c * positions + p];
              gb[c] += acc;
            }
          }
          if (gx.empty()) continue;
          gemm(dcols.data(), wv, g, patch, cout, positions, true, false, false);
          for (std::int64_t ci = 0; ci < cin; ++ci)
            for (std::int64_t i = 0; i < kh; ++i)
              for (std::int64_t j = 0; j < kw; ++j) {
                const double* row = dcols.data() + ((ci * kh + i) * kw + j) * positions;
                double* plane = gx.data() + (b * cin + ci) * h * w;
                for (std::int64_t y = 0; y < oh; ++y)
                  for (std::int64_t xx = 0; xx < ow; ++xx)
                    plane[(y * stride + i) * w + xx * stride + j] += row[y * ow + xx];
              }
        }
      });
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng* rng) {
  check(rate >= 0.0 && rate < 1.0, Errc::kConfig,
        "dropout rate must be in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  check(rng != nullptr, Errc::kConfig, "dropout in training mode needs an rng");
  const double keep_scale = 1.0 / (1.0 - rate);
  const auto xd = x.data();
  std::vector<double> factor(xd.size());
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) {
    factor[i] = rng->uniform() < rate ? 0.0 : keep_scale;
    out[i] = xd[i] * factor[i];
  }
  return make_result(x.shape(), std::move(out), {x}, [factor = std::move(factor)](Node& self) {
    auto gx = input_grad(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * factor[i];
  });
}

Tensor reduce_mean_time(const Tensor& x, std::span<const std::int64_t> lengths) {
  check(x.rank() == 2 || x.rank() == 3, Errc::kShape,
        "reduce_mean_time expects [T,d] or [B,T,d], got " + shape_str(x.shape()));
  const std::int64_t batch = x.rank() == 3 ? x.dim(0) : 1;
  const std::int64_t t_len = x.dim(-2), d = x.dim(-1);
  check(static_cast<std::int64_t>(lengths.size()) == batch, Errc::kShape,
        "reduce_mean_time: " + std::to_string(lengths.size()) + " lengths for batch " + std::to_string(batch));
  for (auto len : lengths) {
    check(len >= 1, Errc::kValue, "reduce_mean_time: empty mask");
    check(len <= t_len, Errc::kShape, "reduce_mean_time: length exceeds time axis");
  }
  std::vector<std::int64_t> lens(lengths.begin(), lengths.end());
  const auto xd = x.data();
  std::vector<double> out(static_cast<std::size_t>(batch * d), 0.0);
  for (std::int64_t b = 0; b < batch; ++b) {
    double* o = out.data() + b * d;
    for (std::int64_t t = 0; t < lens[b]; ++t) {
      const double* row = xd.data() + (b * t_len + t) * d;
      for (std::int64_t i = 0; i < d; ++i) o[i] += row[i];
    }
    const double inv = 1.0 / static_cast<double>(lens[b]);
    for (std::int64_t i = 0; i < d; ++i) o[i] *= inv;
  }
  Shape out_shape = x.rank() == 3 ? Shape{batch, d} : Shape{d};
  return make_result(std::move(out_shape), std::move(out), {x}, [batch, t_len, d, lens](Node& self) {
    auto gx = input_grad(self, 0);
    for (std::int64_t b = 0; b < batch; ++b) {
      const double inv = 1.0 / static_cast<double>(lens[b]);
      const double* g = self.grad.data() + b * d;
      for (std::int64_t t = 0; t < lens[b]; ++t) {
        double* dst = gx.data() + (b * t_len + t) * d;
        for (std::int64_t i = 0; i < d; ++i) dst[i] += g[i] * inv;
      }
    }
  });
}

Tensor mask_frames(const Tensor& x, std::span<const std::int64_t> lengths) {
  check(x.rank() == 3, Errc::kShape, "mask_frames expects [B,T,c], got " + shape_str(x.shape()));
  const std::int64_t batch = x.dim(0), t_len = x.dim(1), c = x.dim(2);
  check(static_cast<std::int64_t>(lengths.size()) == batch, Errc::kShape, "mask_frames: lengths/batch mismatch");
  std::vector<std::int64_t> lens(lengths.begin(), lengths.end());
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::int64_t b = 0; b < batch; ++b) {
    const std::int64_t len = std::min(lens[b], t_len);
    std::fill(out.begin() + (b * t_len + len) * c, out.begin() + (b + 1) * t_len * c, 0.0);
  }
  return make_result(x.shape(), std::move(out), {x}, [batch, t_len, c, lens](Node& self) {
    auto gx = input_grad(self, 0);
    for (std::int64_t b = 0; b < batch; ++b) {
      const std::int64_t len = std::min(lens[b], t_len);
      for (std::int64_t i = b * t_len * c; i < (b * t_len + len) * c; ++i) gx[i] += self.grad[i];
    }
  });
}

Tensor rel_shift(const Tensor& x) {
  check(x.rank() >= 2, Errc::kShape, "rel_shift expects [..., T, 2T-1]");
  const std::int64_t t_len = x.dim(-2), width = x.dim(-1);
  check(width == 2 * t_len - 1, Errc::kShape,
        "rel_shift: last dim must be 2T-1, got " + shape_str(x.shape()));
  const std::int64_t mats = x.numel() / (t_len * width);
  Shape out_shape = x.shape();
  out_shape.back() = t_len;
  std::vector<double> out(static_cast<std::size_t>(mats * t_len * t_len));
  const auto xd = x.data();
  for (std::int64_t m = 0; m < mats; ++m)
    for (std::int64_t i = 0; i < t_len; ++i) {
      const double* src = xd.data() + (m * t_len + i) * width + (t_len - 1 - i);
      std::copy_n(src, t_len, out.begin() + (m * t_len + i) * t_len);
    }
  return make_result(std::move(out_shape), std::move(out), {x}, [mats, t_len, width](Node& self) {
    auto gx = input_grad(self, 0);
    for (std::int64_t m = 0; m < mats; ++m)
      for (std::int64_t i = 0; i < t_len; ++i) {
        double* dst = gx.data() + (m * t_len + i) * width + (t_len - 1 - i);
        const double* g = self.grad.data() + (m * t_len + i) * t_len;
        for (std::int64_t j = 0; j < t_len; ++j) dst[j] += g[j];
      }
  });
}

Tensor embedding(const Tensor& table, std::span<const std::int64_t> ids) {
  check(table.rank() == 2, Errc::kShape, "embedding table must be [V, d]");
  const std::int64_t vocab = table.dim(0), d = table.dim(1);
  check(!ids.empty(), Errc::kShape, "embedding of zero ids");
  std::vector<std::int64_t> idv(ids.begin(), ids.end());
  std::vector<double> out(static_cast<std::size_t>(idv.size() * d));
  const auto td = table.data();
  for (std::size_t i = 0; i < idv.size(); ++i) {
    check(idv[i] >= 0 && idv[i] < vocab, Errc::kValue,
          "token id " + std::to_string(idv[i]) + " out of range [0, " + std::to_string(vocab) + ")");
    std::copy_n(td.begin() + idv[i] * d, d, out.begin() + static_cast<std::int64_t>(i) * d);
  }
  return make_result(Shape{static_cast<std::int64_t>(idv.size()), d}, std::move(out), {table},
                     [idv, d](Node& self) {
                       auto gt = input_grad(self, 0);
                       for (std::size_t i = 0; i < idv.size(); ++i) {
                         const double* g = self.grad.data() + static_cast<std::int64_t>(i) * d;
                         double* dst = gt.data() + idv[i] * d;
                         for (std::int64_t j = 0; j < d; ++j) dst[j] += g[j];
                       }
                     });
}

Tensor key_mask(std::span<const std::int64_t> lengths, std::int64_t time) {
  const auto batch = static_cast<std::int64_t>(lengths.size());
  std::vector<double> m(static_cast<std::size_t>(batch * time), 0.0);
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t t = 0; t < std::min(lengths[b], time); ++t) m[b * time + t] = 1.0;
  return Tensor(Shape{batch, 1, 1, time}, std::move(m));
}

}  // namespace ebf
