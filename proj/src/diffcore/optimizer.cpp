// SPDX-License-Identifier: Apache-2.0
#include "engage/diffcore/optimizer.hpp"

#include <cmath>
#include <string>

#include "engage/error.hpp"

namespace engage {

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ParameterError("unknown optimizer '" + std::string(name) + "'");
}

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ParameterError("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ParameterError("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ParameterError("beta2 must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ParameterError("epsilon must be positive");
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) { config_.validate(); }

void Optimizer::step(std::span<Parameter* const> params, const Gradients& grads) {
  for (Parameter* p : params) {
    const Tensor* g = grads.find(*p);
    if (g != nullptr && g->shape() != p->value.shape()) {
      throw ContractError("gradient shape " + shape_string(g->shape()) + " does not match parameter '" + p->name +
                          "' of shape " + shape_string(p->value.shape()));
    }
  }
  ++steps_;
  const double lr = config_.learning_rate;
  if (config_.kind == OptimizerKind::sgd) {
    for (Parameter* p : params) {
      if (p->frozen) continue;
      if (const Tensor* g = grads.find(*p)) {
        for (std::size_t i = 0; i < g->size(); ++i) p->value[i] -= lr * (*g)[i];
      }
    }
    return;
  }
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (Parameter* p : params) {
    if (p->frozen) continue;
    const Tensor* g = grads.find(*p);
    if (g == nullptr) continue;
    auto [it, inserted] = moments_.try_emplace(p, Moments{Tensor(p->value.shape()), Tensor(p->value.shape())});
    Moments& m = it->second;
    for (std::size_t i = 0; i < g->size(); ++i) {
      const double gi = (*g)[i];
      m.first[i] = b1 * m.first[i] + (1.0 - b1) * gi;
      m.second[i] = b2 * m.second[i] + (1.0 - b2) * gi * gi;
      const double mhat = m.first[i] / c1;
      const double vhat = m.second[i] / c2;
      p->value[i] -= lr * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

}  // namespace engage
