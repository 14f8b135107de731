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
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ebf/error.hpp"

namespace ebf {

using Shape = std::vector<std::int64_t>;

std::int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One vertex of the dynamically recorded graph. `backward` reads this
// node's grad and accumulates into the grads of `inputs`.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  // Lazily allocates a zero-filled gradient of the node's size.
  std::span<double> grad_buffer();
};

}  // namespace detail

// Dense row-major float64 tensor with an attached gradient slot.
//
// Copies are shallow: two Tensor handles may refer to the same storage,
// which is how parameters are shared between a model and its optimizer.
// Ops never mutate their inputs; grads accumulate (sum) across uses.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  // Negative axes count from the end.
  std::int64_t dim(int axis) const;
  std::int64_t numel() const;

  std::span<const double> data() const;
  // Direct write access for initialization and optimizer updates. Not
  // recorded in the graph.
  std::span<double> data_mut();
  double item() const;
  double at(std::initializer_list<std::int64_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const;
  // Empty span when no gradient has been accumulated yet.
  std::span<const double> grad() const;
  std::span<double> grad_mut();
  void zero_grad();

  // Reverse-mode sweep from this scalar.
  void backward() const;

  // Same values, fresh storage, no graph history.
  Tensor detach() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor detail_wrap(std::shared_ptr<detail::Node> node);

  std::shared_ptr<detail::Node> node_;
};

bool grad_enabled();

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

using BackwardFn = std::function<void(Node&)>;

// Wraps freshly computed output storage. The graph edge is recorded only
// when grad mode is on and at least one input requires grad.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs, BackwardFn backward);

// Grad buffer of input `i` of `self`, or an empty span if that input does
// not take gradients.
std::span<double> input_grad(Node& self, std::size_t i);

}  // namespace detail

}  // namespace ebf
