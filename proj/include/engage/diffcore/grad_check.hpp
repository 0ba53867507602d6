// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "engage/diffcore/tape.hpp"

namespace engage {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_parameter = 0;  // index into the checked parameter list
  std::size_t worst_index = 0;      // flat element index within that parameter
  std::size_t entries_checked = 0;
};

// Builds a scalar loss on a fresh tape from the current parameter values.
using LossBuilder = std::function<Var(Tape&)>;

// Compares reverse-mode gradients against central differences
//   (f(theta + eps) - f(theta - eps)) / (2 eps)
// entry by entry. The error of one entry is |analytic - numeric| / max(1, |numeric|).
// eps must lie in [1e-7, 1e-3]. Parameter values are restored on return.
GradCheckReport grad_check(const LossBuilder& loss, std::span<Parameter* const> params, double eps = 1e-5);

}  // namespace engage
