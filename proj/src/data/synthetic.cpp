// SPDX-License-Identifier: Apache-2.0
#include "engage/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <string>

#include "engage/error.hpp"
#include "engage/rng.hpp"

namespace engage::data {

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw ParameterError("synthetic: need at least 2 classes");
  if (counts.size() != static_cast<std::size_t>(num_classes)) {
    throw ParameterError("synthetic: counts has " + std::to_string(counts.size()) + " entries for " +
                         std::to_string(num_classes) + " classes");
  }
  for (std::size_t c : counts)
    if (c < 1) throw ParameterError("synthetic: every class needs at least one sample");
  if (frames < 1 || channels < 1) throw ParameterError("synthetic: frames and channels must be >= 1");
  if (!(separability >= 0.0) || !std::isfinite(separability)) throw ParameterError("synthetic: separability must be >= 0");
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw ParameterError("synthetic: noise_std must be >= 0");
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng = make_rng(spec.seed, {stream::synthetic});
  std::uniform_real_distribution<double> amp(0.5, 1.5);
  std::uniform_real_distribution<double> freq(0.5, 3.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::vector<double> a(spec.channels), f(spec.channels), phi(spec.channels);
  for (std::size_t j = 0; j < spec.channels; ++j) {
    a[j] = amp(rng);
    f[j] = freq(rng);
    phi[j] = phase(rng);
  }

  const double steps = static_cast<double>(spec.frames);
  Tensor base(Shape{spec.frames, spec.channels});
  for (std::size_t t = 0; t < spec.frames; ++t)
    for (std::size_t j = 0; j < spec.channels; ++j)
      base.at(t, j) = a[j] * std::sin(2.0 * std::numbers::pi * f[j] * static_cast<double>(t) / steps + phi[j]);

  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<FeatureSequence> seqs;
  seqs.reserve(std::accumulate(spec.counts.begin(), spec.counts.end(), std::size_t{0}));
  std::size_t id = 0;
  char name[32];
  for (int c = 0; c < spec.num_classes; ++c) {
    const double level = c * spec.separability;
    for (std::size_t k = 0; k < spec.counts[static_cast<std::size_t>(c)]; ++k) {
      Tensor m = base;
      for (double& v : m.data()) {
        v += level;
        if (spec.noise_std > 0.0) v += spec.noise_std * noise(rng);
      }
      std::snprintf(name, sizeof name, "syn_%06zu", id++);
      seqs.push_back(FeatureSequence{name, std::move(m), c, Origin::original, std::nullopt});
    }
  }
  return Dataset(std::move(seqs), spec.num_classes);
}

std::vector<std::size_t> scale_counts(const std::vector<std::size_t>& ratios, std::size_t total) {
  const double sum = static_cast<double>(std::accumulate(ratios.begin(), ratios.end(), std::size_t{0}));
  if (sum <= 0.0) throw ParameterError("scale_counts: ratios sum to zero");
  std::vector<std::size_t> out(ratios.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < ratios.size(); ++c) {
    const double exact = static_cast<double>(total) * static_cast<double>(ratios[c]) / sum;
    out[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += out[c];
    rem.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
  for (std::size_t k = 0; assigned < total && k < rem.size(); ++k, ++assigned) ++out[rem[k].second];
  for (auto& c : out) c = std::max<std::size_t>(c, 1);
  return out;
}

}  // namespace engage::data
