// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "engage/diffcore/tape.hpp"

namespace engage::losses {

struct SupConDiagnostics {
  std::size_t anchors = 0;
  // Anchors whose label is unique in the batch; they contribute zero.
  std::size_t anchors_without_positives = 0;
};

// Supervised contrastive loss summed over anchors.
//   z: [N x P] with unit-norm rows, labels: N entries, tau > 0.
// For anchor i, positives are the other rows with its label and the
// denominator runs over every row except i.
Var supcon_loss(Var z, std::span<const int> labels, double tau, SupConDiagnostics* diagnostics = nullptr);

// Mean over rows of w[y_i] * -log softmax(logits_i)[y_i]. Empty weights
// means unweighted.
Var cross_entropy(Var logits, std::span<const int> labels, std::span<const double> weights = {});

// Mean binary cross-entropy on logits; targets are 0/1.
Var binary_cross_entropy(Var logits, std::span<const int> targets);

// total / (C * count_c) per class. Zero counts are rejected.
std::vector<double> raw_class_weights(std::span<const std::size_t> counts);
// raw_class_weights rescaled to mean 1.
std::vector<double> compute_class_weights(std::span<const std::size_t> counts);

}  // namespace engage::losses
