// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <unordered_map>

#include "engage/diffcore/tape.hpp"

namespace engage {

enum class OptimizerKind { sgd, adam };

OptimizerKind parse_optimizer_kind(std::string_view name);
std::string_view to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

// First-order optimizer with per-parameter Adam moments. Parameters without
// an entry in the gradient map (frozen or unreachable) are left untouched.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  void step(std::span<Parameter* const> params, const Gradients& grads);

  const OptimizerConfig& config() const { return config_; }
  std::uint64_t steps() const { return steps_; }

 private:
  struct Moments {
    Tensor first;
    Tensor second;
  };

  OptimizerConfig config_;
  std::uint64_t steps_ = 0;
  std::unordered_map<const Parameter*, Moments> moments_;
};

}  // namespace engage
