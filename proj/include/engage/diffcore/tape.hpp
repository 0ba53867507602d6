// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "engage/diffcore/tensor.hpp"

namespace engage {

// A named trainable tensor. Frozen parameters enter a tape as constants and
// therefore never receive a gradient.
struct Parameter {
  std::string name;
  Tensor value;
  bool frozen = false;
};

class Tape;

// Handle to a node recorded on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Gradients of a scalar loss with respect to the parameters that reached it,
// in the order the parameters were first recorded.
class Gradients {
 public:
  const Tensor* find(const Parameter& p) const;
  bool contains(const Parameter& p) const { return find(p) != nullptr; }
  std::size_t size() const { return entries_.size(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void add(Parameter* p, Tensor grad) { entries_.emplace_back(p, std::move(grad)); }

 private:
  std::vector<std::pair<Parameter*, Tensor>> entries_;
};

// View handed to an op's backward function.
class BackwardContext {
 public:
  const Tensor& grad_output() const { return *grad_out_; }
  const Tensor& output() const { return *output_; }
  const Tensor& input(std::size_t i) const;
  // Gradient buffer of input i, or nullptr when that input needs no gradient.
  Tensor* input_grad(std::size_t i) const;

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::size_t node_ = 0;
  const Tensor* grad_out_ = nullptr;
  const Tensor* output_ = nullptr;
  std::vector<Tensor*> grads_;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

// Linear record of primitive operations for reverse-mode differentiation.
// Nodes are appended in evaluation order, so inputs always precede outputs.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Records a parameter leaf. Repeated calls with the same parameter return
  // the same node. Frozen parameters become constants.
  Var param(Parameter& p);

  // Appends an op node. The node requires a gradient iff any input does.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar loss. Can be called repeatedly; each call
  // starts from fresh gradient buffers.
  Gradients backward(Var loss);

 private:
  friend class BackwardContext;

  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

}  // namespace engage
