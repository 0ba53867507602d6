// SPDX-License-Identifier: Apache-2.0
#include "engage/diffcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "engage/error.hpp"
#include "engage/kernels/kernels.hpp"

namespace engage::ops {
namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw ContractError("operands live on different tapes");
  return *a.tape;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

std::size_t last_dim(const Tensor& t) { return t.rank() == 0 ? 1 : t.shape().back(); }

template <typename Fwd, typename Deriv>
Var unary(Var x, Fwd fwd, Deriv deriv_from_output) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  return x.tape->record(std::move(out), {x.id}, [deriv_from_output](const BackwardContext& ctx) {
    Tensor* gx = ctx.input_grad(0);
    const Tensor& y = ctx.output();
    const Tensor& gy = ctx.grad_output();
    const Tensor& xin = ctx.input(0);
    for (std::size_t i = 0; i < y.size(); ++i) (*gx)[i] += gy[i] * deriv_from_output(xin[i], y[i]);
  });
}

double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Activation parse_activation(std::string_view name) {
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  if (name == "softmax") return Activation::softmax;
  if (name == "log_softmax") return Activation::log_softmax;
  throw ParameterError("unknown activation '" + std::string(name) + "'");
}

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_string(av.shape()) + " and " +
                     shape_string(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out(Shape{m, n});
  kernels::active().gemm_nn(m, n, k, av.raw(), k, bv.raw(), n, out.raw(), n);
  return tape.record(std::move(out), {a.id, b.id}, [m, k, n](const BackwardContext& ctx) {
    const auto& kt = kernels::active();
    const Tensor& g = ctx.grad_output();
    if (Tensor* ga = ctx.input_grad(0)) kt.gemm_nt(m, k, n, g.raw(), n, ctx.input(1).raw(), n, ga->raw(), k);
    if (Tensor* gb = ctx.input_grad(1)) kt.gemm_tn(k, n, m, ctx.input(0).raw(), k, g.raw(), n, gb->raw(), n);
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  require_rank("transpose", av, 2);
  const std::size_t r = av.dim(0), c = av.dim(1);
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return a.tape->record(std::move(out), {a.id}, [r, c](const BackwardContext& ctx) {
    Tensor* ga = ctx.input_grad(0);
    const Tensor& g = ctx.grad_output();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) (*ga)[i * c + j] += g[j * r + i];
  });
}

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape("add", a.value(), b.value());
  Tensor out = a.value();
  kernels::active().axpy(1.0, b.value().raw(), out.raw(), out.size());
  return tape.record(std::move(out), {a.id, b.id}, [](const BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    for (std::size_t k = 0; k < 2; ++k)
      if (Tensor* gi = ctx.input_grad(k)) kernels::active().axpy(1.0, g.raw(), gi->raw(), g.size());
  });
}

Var sub(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape("sub", a.value(), b.value());
  Tensor out = a.value();
  kernels::active().axpy(-1.0, b.value().raw(), out.raw(), out.size());
  return tape.record(std::move(out), {a.id, b.id}, [](const BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    if (Tensor* ga = ctx.input_grad(0)) kernels::active().axpy(1.0, g.raw(), ga->raw(), g.size());
    if (Tensor* gb = ctx.input_grad(1)) kernels::active().axpy(-1.0, g.raw(), gb->raw(), g.size());
  });
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape("mul", av, bv);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return tape.record(std::move(out), {a.id, b.id}, [](const BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    const Tensor& x = ctx.input(0);
    const Tensor& y = ctx.input(1);
    if (Tensor* ga = ctx.input_grad(0))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * y[i];
    if (Tensor* gb = ctx.input_grad(1))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * x[i];
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  return a.tape->record(std::move(out), {a.id}, [factor](const BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    kernels::active().axpy(factor, g.raw(), ctx.input_grad(0)->raw(), g.size());
  });
}

Var add_bias(Var x, Var bias) {
  Tape& tape = same_tape(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  const std::size_t n = last_dim(xv);
  if (bv.rank() != 1 || bv.dim(0) != n) {
    throw ShapeError("add_bias: bias " + shape_string(bv.shape()) + " does not match " +
                     shape_string(xv.shape()));
  }
  Tensor out = xv;
  const std::size_t rows = xv.size() / n;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] += bv[j];
  return tape.record(std::move(out), {x.id, bias.id}, [rows, n](const BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    if (Tensor* gx = ctx.input_grad(0)) kernels::active().axpy(1.0, g.raw(), gx->raw(), g.size());
    if (Tensor* gb = ctx.input_grad(1))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) (*gb)[j] += g[r * n + j];
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape->record(Tensor::scalar(s), {a.id}, [](const BackwardContext& ctx) {
    const double g = ctx.grad_output()[0];
    for (double& v : ctx.input_grad(0)->data()) v += g;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var weighted_sum(Var a, const Tensor& weights) {
  const Tensor& av = a.value();
  require_same_shape("weighted_sum", av, weights);
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * weights[i];
  return a.tape->record(Tensor::scalar(s), {a.id}, [weights](const BackwardContext& ctx) {
    kernels::active().axpy(ctx.grad_output()[0], weights.raw(), ctx.input_grad(0)->raw(), weights.size());
  });
}

Var sigmoid(Var x) {
  return unary(x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Var softmax(Var x) {
  const Tensor& xv = x.value();
  const std::size_t n = last_dim(xv);
  const std::size_t rows = xv.size() / n;
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.raw() + r * n;
    double* o = out.raw() + r * n;
    const double mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < n; ++j) o[j] /= z;
  }
  return x.tape->record(std::move(out), {x.id}, [rows, n](const BackwardContext& ctx) {
    const Tensor& y = ctx.output();
    const Tensor& g = ctx.grad_output();
    Tensor* gx = ctx.input_grad(0);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = r * n;
      const double dotp = kernels::active().dot(g.raw() + base, y.raw() + base, n);
      for (std::size_t j = 0; j < n; ++j) (*gx)[base + j] += y[base + j] * (g[base + j] - dotp);
    }
  });
}

Var log_softmax(Var x) {
  const Tensor& xv = x.value();
  const std::size_t n = last_dim(xv);
  const std::size_t rows = xv.size() / n;
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.raw() + r * n;
    const double mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(in[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = in[j] - lse;
  }
  return x.tape->record(std::move(out), {x.id}, [rows, n](const BackwardContext& ctx) {
    const Tensor& y = ctx.output();
    const Tensor& g = ctx.grad_output();
    Tensor* gx = ctx.input_grad(0);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = r * n;
      double gs = 0.0;
      for (std::size_t j = 0; j < n; ++j) gs += g[base + j];
      for (std::size_t j = 0; j < n; ++j) (*gx)[base + j] += g[base + j] - std::exp(y[base + j]) * gs;
    }
  });
}

Var activation(Var x, Activation kind) {
  switch (kind) {
    case Activation::sigmoid:
      return sigmoid(x);
    case Activation::tanh:
      return tanh(x);
    case Activation::relu:
      return relu(x);
    case Activation::softmax:
      return softmax(x);
    case Activation::log_softmax:
      return log_softmax(x);
  }
  throw ParameterError("unknown activation kind");
}

Var masked_log_softmax(Var x, std::span<const unsigned char> mask) {
  const Tensor& xv = x.value();
  require_rank("masked_log_softmax", xv, 2);
  const std::size_t rows = xv.dim(0), n = xv.dim(1);
  if (mask.size() != rows * n) throw ShapeError("masked_log_softmax: mask size does not match input");
  std::vector<unsigned char> m(mask.begin(), mask.end());
  Tensor out(xv.shape(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (m[r * n + j]) mx = std::max(mx, xv[r * n + j]);
    if (!std::isfinite(mx)) continue;
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (m[r * n + j]) z += std::exp(xv[r * n + j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j)
      if (m[r * n + j]) out[r * n + j] = xv[r * n + j] - lse;
  }
  return x.tape->record(std::move(out), {x.id}, [rows, n, m = std::move(m)](const BackwardContext& ctx) {
    const Tensor& y = ctx.output();
    const Tensor& g = ctx.grad_output();
    Tensor* gx = ctx.input_grad(0);
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (m[r * n + j]) gs += g[r * n + j];
      for (std::size_t j = 0; j < n; ++j)
        if (m[r * n + j]) (*gx)[r * n + j] += g[r * n + j] - std::exp(y[r * n + j]) * gs;
    }
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape->record(std::move(out), {x.id}, [](const BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    kernels::active().axpy(1.0, g.raw(), ctx.input_grad(0)->raw(), g.size());
  });
}

Var slice_rows(Var x, std::size_t start, std::size_t count) {
  const Tensor& xv = x.value();
  require_rank("slice_rows", xv, 2);
  if (count == 0 || start + count > xv.dim(0)) {
    throw ShapeError("slice_rows: rows [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") out of range for " + shape_string(xv.shape()));
  }
  const std::size_t n = xv.dim(1);
  Tensor out(Shape{count, n});
  std::copy_n(xv.raw() + start * n, count * n, out.raw());
  return x.tape->record(std::move(out), {x.id}, [start, n](const BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    kernels::active().axpy(1.0, g.raw(), ctx.input_grad(0)->raw() + start * n, g.size());
  });
}

Var slice_columns(Var x, std::size_t start, std::size_t count) {
  const Tensor& xv = x.value();
  require_rank("slice_columns", xv, 2);
  if (count == 0 || start + count > xv.dim(1)) {
    throw ShapeError("slice_columns: columns [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of range for " + shape_string(xv.shape()));
  }
  const std::size_t rows = xv.dim(0), n = xv.dim(1);
  Tensor out(Shape{rows, count});
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(xv.raw() + r * n + start, count, out.raw() + r * count);
  return x.tape->record(std::move(out), {x.id}, [rows, n, start, count](const BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    Tensor* gx = ctx.input_grad(0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < count; ++j) (*gx)[r * n + start + j] += g[r * count + j];
  });
}

Var concat_columns(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_columns: no inputs");
  Tape* tape = parts.front().tape;
  const std::size_t rows = parts.front().value().dim(0);
  std::vector<std::size_t> widths, inputs;
  std::size_t total = 0;
  for (Var p : parts) {
    const Tensor& v = p.value();
    require_rank("concat_columns", v, 2);
    if (p.tape != tape) throw ContractError("concat_columns: operands live on different tapes");
    if (v.dim(0) != rows) throw ShapeError("concat_columns: row count mismatch " + shape_string(v.shape()));
    widths.push_back(v.dim(1));
    inputs.push_back(p.id);
    total += v.dim(1);
  }
  Tensor out(Shape{rows, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.raw() + r * widths[k], widths[k], out.raw() + r * total + offset);
    offset += widths[k];
  }
  return tape->record(std::move(out), std::move(inputs), [rows, total, widths](const BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (Tensor* gk = ctx.input_grad(k)) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < widths[k]; ++j) (*gk)[r * widths[k] + j] += g[r * total + off + j];
      }
      off += widths[k];
    }
  });
}

Var conv1d_causal(Var x, Var w, std::size_t dilation) {
  Tape& tape = same_tape(x, w);
  if (dilation < 1) throw ParameterError("conv1d_causal: dilation must be >= 1");
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.rank() != 2 && xv.rank() != 3) {
    throw ShapeError("conv1d_causal: input must be [T x C] or [T x B x C], got " + shape_string(xv.shape()));
  }
  if (wv.rank() != 3) throw ShapeError("conv1d_causal: weight must be [K x C_in x C_out], got " + shape_string(wv.shape()));
  const std::size_t steps = xv.dim(0);
  const std::size_t batch = xv.rank() == 3 ? xv.dim(1) : 1;
  const std::size_t cin = xv.shape().back();
  const std::size_t kernel = wv.dim(0);
  const std::size_t cout = wv.dim(2);
  if (wv.dim(1) != cin) {
    throw ShapeError("conv1d_causal: weight " + shape_string(wv.shape()) + " does not match input " +
                     shape_string(xv.shape()));
  }
  Shape out_shape = xv.shape();
  out_shape.back() = cout;
  Tensor out(out_shape, 0.0);
  const auto& kt = kernels::active();
  // Rows are (t, b) pairs in time-major order, so a lag of s steps is a row
  // offset of s*batch.
  for (std::size_t k = 0; k < kernel; ++k) {
    const std::size_t lag = k * dilation;
    if (lag >= steps) break;
    const std::size_t rows = (steps - lag) * batch;
    kt.gemm_nn(rows, cout, cin, xv.raw(), cin, wv.raw() + k * cin * cout, cout, out.raw() + lag * batch * cout, cout);
  }
  return tape.record(std::move(out), {x.id, w.id},
                     [steps, batch, cin, cout, kernel, dilation](const BackwardContext& ctx) {
                       const auto& kt = kernels::active();
                       const Tensor& g = ctx.grad_output();
                       const Tensor& xin = ctx.input(0);
                       const Tensor& win = ctx.input(1);
                       Tensor* gx = ctx.input_grad(0);
                       Tensor* gw = ctx.input_grad(1);
                       for (std::size_t k = 0; k < kernel; ++k) {
                         const std::size_t lag = k * dilation;
                         if (lag >= steps) break;
                         const std::size_t rows = (steps - lag) * batch;
                         const double* gy = g.raw() + lag * batch * cout;
                         if (gx) kt.gemm_nt(rows, cin, cout, gy, cout, win.raw() + k * cin * cout, cout, gx->raw(), cin);
                         if (gw) kt.gemm_tn(cin, cout, rows, xin.raw(), cin, gy, cout, gw->raw() + k * cin * cout, cout);
                       }
                     });
}

Var dropout(Var x, double rate, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ParameterError("dropout rate must be in [0, 1)");
  const Tensor& xv = x.value();
  if (rate == 0.0) return scale(x, 1.0);
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  Tensor mask(xv.shape());
  for (double& m : mask.data()) m = keep(rng) ? s : 0.0;
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  return x.tape->record(std::move(out), {x.id}, [mask = std::move(mask)](const BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    Tensor* gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * mask[i];
  });
}

Var l2_normalize_rows(Var x) {
  const Tensor& xv = x.value();
  require_rank("l2_normalize_rows", xv, 2);
  const std::size_t rows = xv.dim(0), n = xv.dim(1);
  const auto& kt = kernels::active();
  Tensor out(xv.shape(), 0.0);
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.raw() + r * n;
    norms[r] = std::sqrt(kt.dot(in, in, n));
    if (norms[r] > 0.0 && std::isfinite(norms[r])) {
      for (std::size_t j = 0; j < n; ++j) out[r * n + j] = in[j] / norms[r];
    } else {
      norms[r] = 0.0;
      out[r * n] = 1.0;
    }
  }
  return x.tape->record(std::move(out), {x.id}, [rows, n, norms = std::move(norms)](const BackwardContext& ctx) {
    const auto& kt = kernels::active();
    const Tensor& y = ctx.output();
    const Tensor& g = ctx.grad_output();
    Tensor* gx = ctx.input_grad(0);
    for (std::size_t r = 0; r < rows; ++r) {
      if (norms[r] == 0.0) continue;
      const std::size_t base = r * n;
      const double proj = kt.dot(y.raw() + base, g.raw() + base, n);
      for (std::size_t j = 0; j < n; ++j) (*gx)[base + j] += (g[base + j] - y[base + j] * proj) / norms[r];
    }
  });
}

Var time_mean(Var x) {
  const Tensor& xv = x.value();
  require_rank("time_mean", xv, 3);
  const std::size_t steps = xv.dim(0), inner = xv.dim(1) * xv.dim(2);
  Tensor out(Shape{xv.dim(1), xv.dim(2)}, 0.0);
  const double w = 1.0 / static_cast<double>(steps);
  for (std::size_t t = 0; t < steps; ++t) kernels::active().axpy(w, xv.raw() + t * inner, out.raw(), inner);
  return x.tape->record(std::move(out), {x.id}, [steps, inner, w](const BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    Tensor* gx = ctx.input_grad(0);
    for (std::size_t t = 0; t < steps; ++t) kernels::active().axpy(w, g.raw(), gx->raw() + t * inner, inner);
  });
}

Var bce_with_logits(Var logits, std::span<const int> targets) {
  const Tensor& lv = logits.value();
  if (lv.size() != targets.size()) {
    throw ShapeError("bce_with_logits: " + std::to_string(lv.size()) + " logits vs " +
                     std::to_string(targets.size()) + " targets");
  }
  std::vector<double> t(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] != 0 && targets[i] != 1) {
      throw ContractError("binary cross-entropy target must be 0 or 1, got " + std::to_string(targets[i]) +
                          " at index " + std::to_string(i));
    }
    t[i] = targets[i];
  }
  const double n = static_cast<double>(lv.size());
  double total = 0.0;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    const double l = lv[i];
    total += std::max(l, 0.0) - l * t[i] + std::log1p(std::exp(-std::abs(l)));
  }
  return logits.tape->record(Tensor::scalar(total / n), {logits.id}, [t = std::move(t), n](const BackwardContext& ctx) {
    const double g = ctx.grad_output()[0];
    const Tensor& l = ctx.input(0);
    Tensor* gl = ctx.input_grad(0);
    for (std::size_t i = 0; i < t.size(); ++i) (*gl)[i] += g * (stable_sigmoid(l[i]) - t[i]) / n;
  });
}

}  // namespace engage::ops
