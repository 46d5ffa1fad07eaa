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

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

namespace capa {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape) noexcept;

/// Dense row-major float tensor. Copies share storage (handle semantics);
/// use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<float> values, bool requires_grad = false);

  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<float> values,
                       bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(impl_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const { return values().size(); }
  /// Leading extent; 2-D tensors only for cols().
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const float> values() const;
  std::span<float> mutable_values();
  float operator()(std::size_t r, std::size_t c) const;
  float item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  Tensor clone() const;
  Tensor detach() const;

  const void* id() const noexcept { return impl_.get(); }

 private:
  struct Impl {
    Shape shape;
    std::vector<float> values;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

/// Define-by-run gradient tape. Constructing a Tape makes it the active tape
/// of the calling thread until it is destroyed; tapes nest LIFO. Operations
/// record a node only when a tape is active and an input requires gradient.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::span<const float> output_grad)>;

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() noexcept;

  void record(const Tensor& output, BackwardFn backward);

  /// Seeds d(root)/d(root) = 1 and sweeps the recorded nodes in reverse
  /// order. May be called once per tape.
  void backward(const Tensor& root);

  /// Gradient accumulated for `t`, or an empty span if none reached it.
  std::span<const float> grad(const Tensor& t) const;

  /// Mutable accumulation buffer for `t`; nullptr if `t` does not require grad.
  std::vector<float>* grad_buffer(const Tensor& t);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const void*, std::vector<float>> grads_;
  Tape* previous_ = nullptr;
  bool consumed_ = false;
};

}  // namespace capa
