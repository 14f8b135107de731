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

#include "ebf/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace ebf {
namespace {

thread_local bool g_grad_enabled = true;

}  // namespace

Tensor detail_wrap(std::shared_ptr<detail::Node> node) {
  return Tensor(std::move(node));
}

std::int64_t numel_of(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::span<double> detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, double fill) {
  for (auto d : shape) {
    check(d > 0, Errc::kShape, "tensor dims must be positive, got " + shape_str(shape));
  }
  node_ = std::make_shared<detail::Node>();
  const auto n = numel_of(shape);
  node_->shape = std::move(shape);
  node_->data.assign(static_cast<std::size_t>(n), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) {
  for (auto d : shape) {
    check(d > 0, Errc::kShape, "tensor dims must be positive, got " + shape_str(shape));
  }
  check(numel_of(shape) == static_cast<std::int64_t>(data.size()), Errc::kShape,
        "data length " + std::to_string(data.size()) + " does not match shape " +
            shape_str(shape));
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

const Shape& Tensor::shape() const {
  check(defined(), Errc::kInternal, "use of undefined tensor");
  return node_->shape;
}

std::int64_t Tensor::dim(int axis) const {
  const int r = rank();
  const int a = axis < 0 ? axis + r : axis;
  check(a >= 0 && a < r, Errc::kShape,
        "axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  return node_->shape[static_cast<std::size_t>(a)];
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(node_->data.size()); }

std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::data_mut() { return node_->data; }

double Tensor::item() const {
  check(numel() == 1, Errc::kShape, "item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

double Tensor::at(std::initializer_list<std::int64_t> index) const {
  const Shape& s = shape();
  check(index.size() == s.size(), Errc::kShape, "index rank mismatch");
  std::int64_t offset = 0;
  std::size_t i = 0;
  for (auto v : index) {
    check(v >= 0 && v < s[i], Errc::kShape, "index out of range");
    offset = offset * s[i] + v;
    ++i;
  }
  return node_->data[static_cast<std::size_t>(offset)];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  node_->requires_grad = flag;
  return *this;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::grad_mut() { return node_->grad_buffer(); }

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

void Tensor::backward() const {
  check(defined() && numel() == 1, Errc::kShape,
        "backward() requires a scalar loss, got " + shape_str(shape()));
  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->data); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace detail {

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (g_grad_enabled) {
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (auto& t : inputs) node->inputs.push_back(t.node_ptr());
      node->backward = std::move(backward);
    }
  }
  return detail_wrap(std::move(node));
}

std::span<double> input_grad(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  if (!in.requires_grad) return {};
  return in.grad_buffer();
}

}  // namespace detail
}  // namespace ebf
