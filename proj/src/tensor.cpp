// Copyright 2026 The capa Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "capa/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <utility>

#include "capa/error.hpp"

namespace capa {

std::size_t numel(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  impl_->values.assign(capa::numel(shape), 0.0F);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<float> values, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  if (capa::numel(shape) != values.size()) {
    throw DimensionError("tensor: extents product " + std::to_string(capa::numel(shape)) +
                         " does not match data length " + std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<float> values,
                      bool requires_grad) {
  return Tensor({rows, cols}, std::vector<float>(values), requires_grad);
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<float>{value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!impl_) throw std::logic_error("tensor: undefined");
  return impl_->shape;
}

std::size_t Tensor::rows() const {
  const auto& s = shape();
  if (s.empty()) throw DimensionError("tensor: rows() of a scalar");
  return s[0];
}

std::size_t Tensor::cols() const {
  const auto& s = shape();
  if (s.size() != 2) throw DimensionError("tensor: cols() requires a matrix");
  return s[1];
}

std::span<const float> Tensor::values() const {
  if (!impl_) throw std::logic_error("tensor: undefined");
  return impl_->values;
}

std::span<float> Tensor::mutable_values() {
  if (!impl_) throw std::logic_error("tensor: undefined");
  return impl_->values;
}

float Tensor::operator()(std::size_t r, std::size_t c) const {
  return impl_->values[r * cols() + c];
}

float Tensor::item() const {
  if (numel() != 1) throw DimensionError("tensor: item() requires exactly one element");
  return impl_->values[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!impl_) throw std::logic_error("tensor: undefined");
  impl_->requires_grad = flag;
}

Tensor Tensor::clone() const {
  return Tensor(shape(), impl_->values, impl_->requires_grad);
}

Tensor Tensor::detach() const { return Tensor(shape(), impl_->values, false); }

// ---------------------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() {
  if (g_active_tape == this) g_active_tape = previous_;
}

Tape* Tape::active() noexcept { return g_active_tape; }

void Tape::record(const Tensor& output, BackwardFn backward) {
  nodes_.push_back(Node{output, std::move(backward)});
}

void Tape::backward(const Tensor& root) {
  if (consumed_) throw std::logic_error("tape: backward already run");
  if (root.numel() != 1) throw DimensionError("tape: backward root must be a scalar");
  consumed_ = true;
  if (!root.requires_grad()) return;
  grads_[root.id()] = {1.0F};
  // Recording order is a topological order, so one reverse sweep suffices.
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    const auto found = grads_.find(it->output.id());
    if (found == grads_.end()) continue;
    // The output's buffer is complete once we reach its node; move it out so
    // the backward rule may insert into grads_ freely.
    std::vector<float> out_grad = std::move(found->second);
    grads_.erase(found);
    it->backward(*this, out_grad);
  }
}

std::span<const float> Tape::grad(const Tensor& t) const {
  const auto found = grads_.find(t.id());
  if (found == grads_.end()) return {};
  return found->second;
}

std::vector<float>* Tape::grad_buffer(const Tensor& t) {
  if (!t.requires_grad()) return nullptr;
  auto [it, inserted] = grads_.try_emplace(t.id());
  if (inserted) it->second.assign(t.numel(), 0.0F);
  return &it->second;
}

}  // namespace capa
