// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "engage/data/dataset.hpp"
#include "engage/rng.hpp"

// Label-preserving time-series augmentations and class-targeted oversampling.
// Every transform returns a new sequence with origin = augmented and the
// source's shape, label and split tag.
namespace engage::augment {

using data::Dataset;
using data::FeatureSequence;

enum class Transform { jitter, scale, shift, permute, flip };
enum class FlipMode { time_reverse, value_mirror };

Transform parse_transform(std::string_view name);
std::string_view to_string(Transform t);
FlipMode parse_flip_mode(std::string_view name);
std::string_view to_string(FlipMode m);

struct AugmentPolicy {
  // Target multiplier per class; 1 means no synthetic copies.
  std::vector<double> factors{10.0, 10.0, 1.5, 1.5};
  std::vector<Transform> transforms{Transform::jitter, Transform::scale, Transform::shift, Transform::permute,
                                    Transform::flip};
  double jitter_fraction = 0.1;
  double scale_low = 0.75;
  double scale_high = 1.25;
  std::size_t shift_units = 5;
  std::size_t permute_segments = 4;
  FlipMode flip_mode = FlipMode::time_reverse;
  std::uint64_t seed = 0;

  void validate(int num_classes) const;
};

// Adds N(0, (fraction * ptp_j)^2) noise to channel j, where ptp_j is the
// channel's max minus min over time.
FeatureSequence jitter(const FeatureSequence& s, double fraction, Rng& rng);

// Multiplies every value by one k ~ U(low, high).
FeatureSequence magnitude_scale(const FeatureSequence& s, double low, double high, Rng& rng);
FeatureSequence scale_by(const FeatureSequence& s, double k);

// Shifts by a nonzero u ~ U{-max_units..max_units}, replicating edge frames.
FeatureSequence time_shift(const FeatureSequence& s, std::size_t max_units, Rng& rng);
// y[t] = x[clamp(t - u, 0, T-1)]
FeatureSequence shift_by(const FeatureSequence& s, long long u);

// Cuts time into n near-equal contiguous segments and reorders them uniformly.
FeatureSequence permute_segments(const FeatureSequence& s, std::size_t n_segments, Rng& rng);
// Output segment k is input segment order[k].
FeatureSequence permute_with(const FeatureSequence& s, std::size_t n_segments, std::span<const std::size_t> order);

// time_reverse: x[t] <- x[T-1-t]; value_mirror: x <- 2 mean_j - x per channel.
FeatureSequence flip(const FeatureSequence& s, FlipMode mode);

FeatureSequence apply_transform(const FeatureSequence& s, Transform t, const AugmentPolicy& p, Rng& rng);

// Appends ceil((f_c - 1) * n_c) augmented copies for every class c, each a
// single uniformly chosen transform of a uniformly chosen original of class
// c. Originals are kept unchanged and first. Refuses test data.
Dataset apply_policy(const Dataset& d, const AugmentPolicy& p);

// Number of copies apply_policy adds for a class of n originals.
std::size_t copies_for(double factor, std::size_t n);

}  // namespace engage::augment
