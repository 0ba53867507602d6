// SPDX-License-Identifier: Apache-2.0
#include "engage/data/split.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "engage/error.hpp"
#include "engage/rng.hpp"

namespace engage::data {

DatasetSplits split_dataset(const Dataset& d, const SplitFractions& fr, std::uint64_t seed) {
  const double total = fr.train + fr.validation + fr.test;
  if (fr.train < 0 || fr.validation < 0 || fr.test < 0 || std::abs(total - 1.0) > 1e-9) {
    throw ParameterError("split fractions must be non-negative and sum to 1");
  }
  const std::size_t active_splits = (fr.train > 0) + (fr.validation > 0) + (fr.test > 0);

  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(d.num_classes()));
  for (std::size_t i = 0; i < d.size(); ++i) by_class[static_cast<std::size_t>(d[i].label)].push_back(i);

  Rng rng = make_rng(seed, {stream::split});
  std::vector<FeatureSequence> parts[3];
  std::vector<std::string> warnings;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) continue;
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t n_test = 0, n_val = 0;
    if (idx.size() < active_splits) {
      warnings.push_back("class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                         " samples, fewer than the number of splits; assigned wholly to train");
    } else {
      n_test = static_cast<std::size_t>(std::llround(fr.test * static_cast<double>(idx.size())));
      n_val = static_cast<std::size_t>(std::llround(fr.validation * static_cast<double>(idx.size())));
      n_test = std::min(n_test, idx.size());
      n_val = std::min(n_val, idx.size() - n_test);
    }
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const int which = k < n_test ? 2 : (k < n_test + n_val ? 1 : 0);
      parts[which].push_back(d[idx[k]]);
    }
  }
  // Restore source order inside each split for readable output.
  auto order = [&](std::vector<FeatureSequence>& v) {
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < d.size(); ++i) pos.emplace(d[i].sample_id, i);
    std::stable_sort(v.begin(), v.end(), [&](const auto& a, const auto& b) { return pos[a.sample_id] < pos[b.sample_id]; });
  };
  const Split tags[3] = {Split::train, Split::validation, Split::test};
  for (int k = 0; k < 3; ++k) {
    order(parts[k]);
    for (auto& s : parts[k]) s.split = tags[k];
  }
  return DatasetSplits{Dataset(std::move(parts[0]), d.num_classes(), Split::train),
                       Dataset(std::move(parts[1]), d.num_classes(), Split::validation),
                       Dataset(std::move(parts[2]), d.num_classes(), Split::test), std::move(warnings)};
}

DatasetSplits partition_by_tags(const Dataset& d) {
  std::vector<FeatureSequence> parts[3];
  for (const auto& s : d.sequences()) {
    if (!s.split) throw ContractError("sample '" + s.sample_id + "' has no split tag");
    parts[static_cast<int>(*s.split)].push_back(s);
  }
  return DatasetSplits{Dataset(std::move(parts[0]), d.num_classes(), Split::train),
                       Dataset(std::move(parts[1]), d.num_classes(), Split::validation),
                       Dataset(std::move(parts[2]), d.num_classes(), Split::test), {}};
}

}  // namespace engage::data
