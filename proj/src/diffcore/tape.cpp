// SPDX-License-Identifier: Apache-2.0
#include "engage/diffcore/tape.hpp"

#include <optional>

#include "engage/error.hpp"

namespace engage {

const Tensor& Var::value() const {
  if (tape == nullptr) throw ContractError("Var is not attached to a tape");
  return tape->value(id);
}

const Tensor* Gradients::find(const Parameter& p) const {
  for (const auto& [param, grad] : entries_) {
    if (param == &p) return &grad;
  }
  return nullptr;
}

const Tensor& BackwardContext::input(std::size_t i) const {
  return tape_->nodes_[tape_->nodes_[node_].inputs.at(i)].value;
}

Tensor* BackwardContext::input_grad(std::size_t i) const { return grads_.at(i); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var{this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  if (p.frozen) return constant(p.value);
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
  nodes_.push_back(Node{p.value, {}, {}, &p, true});
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  bool needs = false;
  for (std::size_t in : inputs) {
    if (in >= nodes_.size()) throw ContractError("op input refers to a node not yet on the tape");
    needs = needs || nodes_[in].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), std::move(inputs), needs ? std::move(backward) : BackwardFn{},
                        nullptr, needs});
  return Var{this, nodes_.size() - 1};
}

Gradients Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("loss was not produced on this tape");
  const Tensor& lv = nodes_.at(loss.id).value;
  if (lv.size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_string(lv.shape()));
  }

  std::vector<std::optional<Tensor>> grads(loss.id + 1);
  grads[loss.id] = Tensor(lv.shape(), 1.0);

  BackwardContext ctx;
  ctx.tape_ = this;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!grads[id] || !node.requires_grad || !node.backward) continue;
    ctx.node_ = id;
    ctx.grad_out_ = &*grads[id];
    ctx.output_ = &node.value;
    ctx.grads_.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t in = node.inputs[k];
      if (!nodes_[in].requires_grad) continue;
      if (!grads[in]) grads[in] = Tensor(nodes_[in].value.shape(), 0.0);
      ctx.grads_[k] = &*grads[in];
    }
    node.backward(ctx);
  }

  Gradients out;
  for (std::size_t id = 0; id <= loss.id; ++id) {
    if (nodes_[id].param != nullptr && grads[id]) out.add(nodes_[id].param, std::move(*grads[id]));
  }
  return out;
}

}  // namespace engage
