// SPDX-License-Identifier: Apache-2.0
#include "engage/losses/losses.hpp"

#include <cmath>
#include <string>

#include "engage/diffcore/ops.hpp"
#include "engage/error.hpp"

namespace engage::losses {

Var supcon_loss(Var z, std::span<const int> labels, double tau, SupConDiagnostics* diagnostics) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ParameterError("supcon_loss: temperature must be > 0");
  const Tensor& zv = z.value();
  if (zv.rank() != 2) throw ShapeError("supcon_loss: embeddings must be a matrix, got " + shape_string(zv.shape()));
  const std::size_t n = zv.dim(0), width = zv.dim(1);
  if (n < 2) throw ContractError("supcon_loss: batch needs at least 2 samples, got " + std::to_string(n));
  if (labels.size() != n) throw ShapeError("supcon_loss: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < width; ++k) sq += zv.at(i, k) * zv.at(i, k);
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-9) {
      throw ContractError("supcon_loss: row " + std::to_string(i) + " is not unit-norm");
    }
  }

  std::vector<unsigned char> others(n * n, 1);
  for (std::size_t i = 0; i < n; ++i) others[i * n + i] = 0;

  Tensor weights({n, n});
  std::size_t lonely = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t positives = 0;
    for (std::size_t p = 0; p < n; ++p) positives += p != i && labels[p] == labels[i];
    if (positives == 0) {
      ++lonely;
      continue;
    }
    for (std::size_t p = 0; p < n; ++p)
      if (p != i && labels[p] == labels[i]) weights.at(i, p) = -1.0 / static_cast<double>(positives);
  }
  if (diagnostics != nullptr) {
    diagnostics->anchors += n;
    diagnostics->anchors_without_positives += lonely;
  }

  Var sim = ops::scale(ops::matmul(z, ops::transpose(z)), 1.0 / tau);
  return ops::weighted_sum(ops::masked_log_softmax(sim, others), weights);
}

Var cross_entropy(Var logits, std::span<const int> labels, std::span<const double> weights) {
  const Tensor& lv = logits.value();
  if (lv.rank() != 2) throw ShapeError("cross_entropy: logits must be [N x C], got " + shape_string(lv.shape()));
  const std::size_t n = lv.dim(0), classes = lv.dim(1);
  if (labels.size() != n) throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
  if (!weights.empty() && weights.size() != classes) {
    throw ShapeError("cross_entropy: " + std::to_string(weights.size()) + " class weights for " + std::to_string(classes) + " classes");
  }
  Tensor pick({n, classes});
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw ContractError("cross_entropy: label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(classes) + ")");
    }
    const auto y = static_cast<std::size_t>(labels[i]);
    pick.at(i, y) = -(weights.empty() ? 1.0 : weights[y]) / static_cast<double>(n);
  }
  return ops::weighted_sum(ops::log_softmax(logits), pick);
}

Var binary_cross_entropy(Var logits, std::span<const int> targets) { return ops::bce_with_logits(logits, targets); }

std::vector<double> raw_class_weights(std::span<const std::size_t> counts) {
  if (counts.empty()) throw ContractError("compute_class_weights: no classes");
  double total = 0.0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      throw ContractError("compute_class_weights: class " + std::to_string(c) +
                          " has no samples; merge it with a neighbouring level or oversample it first");
    }
    total += static_cast<double>(counts[c]);
  }
  const double classes = static_cast<double>(counts.size());
  std::vector<double> w(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) w[c] = total / (classes * static_cast<double>(counts[c]));
  return w;
}

std::vector<double> compute_class_weights(std::span<const std::size_t> counts) {
  std::vector<double> w = raw_class_weights(counts);
  double mean = 0.0;
  for (double v : w) mean += v;
  mean /= static_cast<double>(w.size());
  for (double& v : w) v /= mean;
  return w;
}

}  // namespace engage::losses
