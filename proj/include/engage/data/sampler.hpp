// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "engage/data/dataset.hpp"
#include "engage/rng.hpp"

namespace engage::data {

enum class SamplingMode { uniform, class_balanced };

SamplingMode parse_sampling_mode(std::string_view text);

// Batch indices into `labels`.
//   uniform:        without replacement when size <= n, otherwise with.
//   class_balanced: ceil(size / C) draws from each of the C present classes
//                   (with replacement for short classes), interleaved and
//                   truncated to size; at least one same-label pair is
//                   always included.
std::vector<std::size_t> sample_indices(std::span<const int> labels, int num_classes, std::size_t size,
                                        SamplingMode mode, Rng& rng);

std::vector<const FeatureSequence*> sample_batch(const Dataset& d, std::size_t size, SamplingMode mode, Rng& rng);

}  // namespace engage::data
