// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "engage/data/dataset.hpp"
#include "engage/models/models.hpp"

// Ordinal decomposition of a C-level problem into C-1 "y > c" binary tasks
// and recombination of their probabilities into a class distribution.
namespace engage::ordinal {

struct BinaryTask {
  std::vector<int> targets;
  std::size_t positives = 0;
  // One side of the threshold is empty; the task cannot be trained.
  bool degenerate = false;
};

// t_i = 1 iff labels[i] > threshold; threshold must lie in [0, C-2].
BinaryTask relabel_binary(std::span<const int> labels, int threshold, int num_classes);

enum class ClampPolicy { clamp_renormalize };

struct Distribution {
  // Telescoped differences; always sums to 1, may hold negatives.
  std::vector<double> raw;
  // raw with negatives clamped to 0 and renormalised.
  std::vector<double> adjusted;
  bool clamped = false;
};

// p_0 = 1 - g_0, p_c = g_{c-1} - g_c, p_{C-1} = g_{C-2}; g_c must lie in [0, 1].
Distribution combine_probabilities(std::span<const double> g);

// Index of the largest entry, lowest index on ties.
int argmax_lower(std::span<const double> p);

// Probability that y > threshold, for one trained binary task.
class BinaryScorer {
 public:
  virtual ~BinaryScorer() = default;
  // Per-frame width the scorer consumes.
  virtual std::size_t input_width() const = 0;
  virtual std::vector<double> score(std::span<const data::FeatureSequence* const> batch) const = 0;
};

// sigmoid(classifier(encoder(x))) of a network with a single-output head.
class NetworkScorer : public BinaryScorer {
 public:
  explicit NetworkScorer(models::Network net);
  std::size_t input_width() const override { return net_.config().input_width(); }
  std::vector<double> score(std::span<const data::FeatureSequence* const> batch) const override;
  const models::Network& network() const { return net_; }

 private:
  models::Network net_;
};

struct OrdinalPrediction {
  int label = 0;
  Distribution distribution;
};

class OrdinalEnsemble {
 public:
  // Member c scores "y > c"; exactly num_classes - 1 members.
  OrdinalEnsemble(int num_classes, std::vector<std::unique_ptr<BinaryScorer>> members,
                  ClampPolicy policy = ClampPolicy::clamp_renormalize);

  int num_classes() const { return num_classes_; }
  ClampPolicy policy() const { return policy_; }
  const BinaryScorer& member(std::size_t c) const { return *members_.at(c); }
  std::size_t size() const { return members_.size(); }

  OrdinalPrediction predict(const data::FeatureSequence& s) const;
  std::vector<OrdinalPrediction> predict(std::span<const data::FeatureSequence* const> batch) const;

 private:
  int num_classes_;
  std::vector<std::unique_ptr<BinaryScorer>> members_;
  ClampPolicy policy_;
};

// Container of member checkpoints plus C and the clamp policy. Every member
// must be a NetworkScorer.
std::string save_ensemble(const OrdinalEnsemble& e);
OrdinalEnsemble load_ensemble(std::string_view bytes, const models::ModelConfig& member_config);

}  // namespace engage::ordinal
