// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "engage/diffcore/tensor.hpp"

namespace engage::data {

enum class Origin { original, augmented };
enum class Split { train, validation, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

// One labeled multivariate time series: frames is [T x D].
struct FeatureSequence {
  std::string sample_id;
  Tensor frames;
  int label = 0;
  Origin origin = Origin::original;
  std::optional<Split> split;

  std::size_t length() const { return frames.dim(0); }
  std::size_t channels() const { return frames.dim(1); }
};

// Which per-frame channels a sequence carries.
//   affect_behavioral:        valence, arousal, 12 behavioral           (14)
//   affect_behavioral_latent: valence, arousal, 256 latent, 12 behav.   (270)
//   generic:                  any width, no fusion network
enum class FeatureSet { affect_behavioral, affect_behavioral_latent, generic };

std::string_view to_string(FeatureSet set);
FeatureSet parse_feature_set(std::string_view text);

struct FeatureLayout {
  static constexpr std::size_t affect_dims = 2;
  static constexpr std::size_t latent_dims = 256;
  static constexpr std::size_t behavioral_dims = 12;
  static constexpr std::size_t fused_latent_dims = 32;

  FeatureSet set = FeatureSet::affect_behavioral_latent;
  std::size_t generic_dims = 0;  // 0 = infer from data

  // Per-frame width of the ingested features.
  std::size_t raw_width() const;
  // Per-frame width seen by the encoder (after latent fusion).
  std::size_t encoder_width() const;
};

// Immutable collection of sequences sharing a channel count and class count.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<FeatureSequence> sequences, int num_classes, std::optional<Split> split = std::nullopt);

  const std::vector<FeatureSequence>& sequences() const { return sequences_; }
  const FeatureSequence& operator[](std::size_t i) const { return sequences_[i]; }
  std::size_t size() const { return sequences_.size(); }
  bool empty() const { return sequences_.empty(); }
  int num_classes() const { return num_classes_; }
  std::optional<Split> split() const { return split_; }
  const std::vector<std::size_t>& class_counts() const { return class_counts_; }
  // Channel count, 0 for an empty dataset.
  std::size_t channels() const;
  // Common sequence length, or nullopt when lengths differ or the set is empty.
  std::optional<std::size_t> uniform_length() const;
  std::vector<int> labels() const;

 private:
  std::vector<FeatureSequence> sequences_;
  int num_classes_ = 0;
  std::optional<Split> split_;
  std::vector<std::size_t> class_counts_;
};

// Concatenates datasets with the same class count. The result carries no split tag.
Dataset merge(const std::vector<const Dataset*>& parts);

// Returns a copy with the given split tag on the dataset and every sequence.
Dataset with_split(const Dataset& d, Split split);

struct ClassDistribution {
  std::vector<std::size_t> counts;
  std::vector<double> fractions;
  std::size_t total = 0;
};

ClassDistribution class_distribution(const Dataset& d);

// Drops the latent block from affect_behavioral_latent data.
Dataset select_features(const Dataset& d, FeatureSet from, FeatureSet to);

}  // namespace engage::data
