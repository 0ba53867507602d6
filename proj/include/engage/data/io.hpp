// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>

#include "engage/data/dataset.hpp"

namespace engage::data {

struct LoadOptions {
  int num_classes = 4;
  // Keep every n-th frame (1 keeps all).
  std::size_t frame_stride = 1;
  // When set, keep only the first n frames; shorter samples are rejected.
  std::optional<std::size_t> crop_frames;
};

// Reads a features CSV (sample_id,frame,f0..f{D-1}) and a labels CSV
// (sample_id,label[,split]). Sequences keep the order in which sample ids
// first appear in the features file; rows of one sample are sorted by frame.
// Throws IngestionError naming the sample and line for any malformed input.
Dataset load_dataset(const std::filesystem::path& features, const std::filesystem::path& labels,
                     const FeatureLayout& layout, const LoadOptions& options = {});

// Writes the inverse of load_dataset. Values use round-trip precision. A
// split column is written when any sequence carries a split tag.
void write_dataset(const Dataset& d, const std::filesystem::path& features, const std::filesystem::path& labels);

}  // namespace engage::data
