// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "engage/data/dataset.hpp"

namespace engage::data {

struct SplitFractions {
  double train = 0.6;
  double validation = 0.2;
  double test = 0.2;
};

struct DatasetSplits {
  Dataset train;
  Dataset validation;
  Dataset test;
  std::vector<std::string> warnings;
};

// Seeded stratified partition. A class with fewer samples than non-empty
// splits is placed wholly in train and reported in `warnings`.
DatasetSplits split_dataset(const Dataset& d, const SplitFractions& fractions, std::uint64_t seed);

// Partition by per-sequence split tags (the labels file's split column).
// Untagged sequences are an error.
DatasetSplits partition_by_tags(const Dataset& d);

}  // namespace engage::data
