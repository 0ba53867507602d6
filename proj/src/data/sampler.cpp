// SPDX-License-Identifier: Apache-2.0
#include "engage/data/sampler.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "engage/error.hpp"

namespace engage::data {

SamplingMode parse_sampling_mode(std::string_view text) {
  if (text == "uniform") return SamplingMode::uniform;
  if (text == "class_balanced") return SamplingMode::class_balanced;
  throw ParameterError("unknown sampling mode '" + std::string(text) + "'");
}

namespace {

// k distinct draws from [0, n) when possible, with replacement otherwise.
std::vector<std::size_t> draw(const std::vector<std::size_t>& pool, std::size_t k, Rng& rng) {
  std::vector<std::size_t> out;
  out.reserve(k);
  if (k <= pool.size()) {
    std::vector<std::size_t> tmp = pool;
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, tmp.size() - 1);
      std::swap(tmp[i], tmp[pick(rng)]);
      out.push_back(tmp[i]);
    }
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (std::size_t i = 0; i < k; ++i) out.push_back(pool[pick(rng)]);
  }
  return out;
}

}  // namespace

std::vector<std::size_t> sample_indices(std::span<const int> labels, int num_classes, std::size_t size,
                                        SamplingMode mode, Rng& rng) {
  if (labels.empty()) throw ContractError("sample_batch: empty dataset");
  if (size < 2) throw ContractError("sample_batch: batch size must be >= 2");

  if (mode == SamplingMode::uniform) {
    std::vector<std::size_t> all(labels.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return draw(all, size, rng);
  }

  std::vector<std::vector<std::size_t>> pools(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) pools.at(static_cast<std::size_t>(labels[i])).push_back(i);
  std::vector<std::size_t> present;
  for (std::size_t c = 0; c < pools.size(); ++c)
    if (!pools[c].empty()) present.push_back(c);
  if (present.size() < 2) throw ContractError("class_balanced sampling needs at least 2 classes present");

  const std::size_t per = (size + present.size() - 1) / present.size();
  std::vector<std::vector<std::size_t>> drawn;
  for (std::size_t c : present) drawn.push_back(draw(pools[c], per, rng));

  std::vector<std::size_t> out;
  out.reserve(size);
  for (std::size_t k = 0; k < per && out.size() < size; ++k)
    for (std::size_t c = 0; c < drawn.size() && out.size() < size; ++c) out.push_back(drawn[c][k]);

  // Fewer slots than classes: make the last slot a positive for the first.
  if (per == 1) {
    const auto& pool = pools[present.front()];
    std::size_t partner = drawn.front().front();
    if (pool.size() > 1) {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 2);
      partner = pool[pick(rng)];
      if (partner == drawn.front().front()) partner = pool.back();
    }
    out.back() = partner;
  }
  return out;
}

std::vector<const FeatureSequence*> sample_batch(const Dataset& d, std::size_t size, SamplingMode mode, Rng& rng) {
  const std::vector<int> labels = d.labels();
  std::vector<const FeatureSequence*> out;
  for (std::size_t i : sample_indices(labels, d.num_classes(), size, mode, rng)) out.push_back(&d[i]);
  return out;
}

}  // namespace engage::data
