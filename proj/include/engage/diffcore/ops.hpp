// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "engage/diffcore/tape.hpp"

// Differentiable primitives. Each op computes its forward value eagerly and
// records the analytic vector-Jacobian product on the tape of its inputs.
namespace engage::ops {

enum class Activation { sigmoid, tanh, relu, softmax, log_softmax };

Activation parse_activation(std::string_view name);

// [m x k] * [k x n]
Var matmul(Var a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
// Adds a length-n vector to every row of a tensor whose last axis is n.
Var add_bias(Var x, Var bias);

Var sum(Var a);
Var mean(Var a);
// Sum of a elementwise-multiplied by a constant tensor of the same shape.
Var weighted_sum(Var a, const Tensor& weights);

Var sigmoid(Var x);
Var tanh(Var x);
Var relu(Var x);
// Softmax-family ops reduce over the last axis.
Var softmax(Var x);
Var log_softmax(Var x);
Var activation(Var x, Activation kind);

// Row-wise log-softmax restricted to entries where mask is nonzero; other
// entries are zero and carry no gradient. Rows with an empty mask are zero.
// x is [n x m], mask holds n*m flags.
Var masked_log_softmax(Var x, std::span<const unsigned char> mask);

Var reshape(Var x, Shape shape);
// 2-D slicing and concatenation.
Var slice_rows(Var x, std::size_t start, std::size_t count);
Var slice_columns(Var x, std::size_t start, std::size_t count);
Var concat_columns(std::span<const Var> parts);

// Dilated causal 1-D convolution over a time-major input.
//   x: [T x C_in] or [T x B x C_in]; w: [K x C_in x C_out]
//   y[t] = sum_k x[t - k*dilation] * w[k], zero for t - k*dilation < 0.
// Output has the input's layout with C_out channels.
Var conv1d_causal(Var x, Var w, std::size_t dilation);

// Inverted dropout: survivors are scaled by 1/(1-rate).
Var dropout(Var x, double rate, std::mt19937_64& rng);

// Divides each row by its L2 norm. A zero row maps to the first basis vector
// with zero gradient.
Var l2_normalize_rows(Var x);

// Mean over the leading (time) axis of a [T x B x C] tensor -> [B x C].
Var time_mean(Var x);

// Mean binary cross-entropy on logits, computed in log-sum-exp form.
// logits has n elements; targets are 0/1.
Var bce_with_logits(Var logits, std::span<const int> targets);

}  // namespace engage::ops
