// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "engage/data/dataset.hpp"

namespace engage::data {

// Ordinal sequences with class-dependent level:
//   x[t, j] = c * separability + a_j * sin(2 pi f_j t / T + phi_j) + noise
// The sinusoid parameters (a_j, f_j, phi_j) are drawn once per dataset and
// shared by all classes, so separability 0 makes the classes identical.
struct SyntheticSpec {
  int num_classes = 4;
  std::size_t frames = 50;
  std::size_t channels = 46;
  std::vector<std::size_t> counts{25, 25, 25, 25};
  double separability = 1.0;
  double noise_std = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

// Per-class counts proportional to `ratios` summing to about `total`, with at
// least one sample per class (largest-remainder rounding).
std::vector<std::size_t> scale_counts(const std::vector<std::size_t>& ratios, std::size_t total);

}  // namespace engage::data
