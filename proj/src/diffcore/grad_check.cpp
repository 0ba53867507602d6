// SPDX-License-Identifier: Apache-2.0
#include "engage/diffcore/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "engage/error.hpp"

namespace engage {
namespace {

double evaluate(const LossBuilder& loss, std::size_t param, std::size_t index) {
  Tape tape;
  const double v = loss(tape).value().item();
  if (!std::isfinite(v)) {
    throw NumericError("grad_check: loss is not finite while perturbing parameter " + std::to_string(param) +
                       " entry " + std::to_string(index));
  }
  return v;
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& loss, std::span<Parameter* const> params, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw ParameterError("grad_check: eps must be in [1e-7, 1e-3]");

  Tape tape;
  Var out = loss(tape);
  if (!std::isfinite(out.value().item())) throw NumericError("grad_check: loss is not finite at the base point");
  const Gradients grads = tape.backward(out);

  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Parameter& param = *params[p];
    const Tensor* analytic = grads.find(param);
    for (std::size_t i = 0; i < param.value.size(); ++i) {
      const double saved = param.value[i];
      double plus = 0.0, minus = 0.0;
      try {
        param.value[i] = saved + eps;
        plus = evaluate(loss, p, i);
        param.value[i] = saved - eps;
        minus = evaluate(loss, p, i);
      } catch (...) {
        param.value[i] = saved;
        throw;
      }
      param.value[i] = saved;

      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic ? (*analytic)[i] : 0.0;
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
      if (report.entries_checked == 0 || err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_parameter = p;
        report.worst_index = i;
      }
      ++report.entries_checked;
    }
  }
  return report;
}

}  // namespace engage
