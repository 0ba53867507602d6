// SPDX-License-Identifier: Apache-2.0
#include "engage/augment/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "engage/error.hpp"

namespace engage::augment {

Transform parse_transform(std::string_view name) {
  if (name == "jitter") return Transform::jitter;
  if (name == "scale") return Transform::scale;
  if (name == "shift") return Transform::shift;
  if (name == "permute") return Transform::permute;
  if (name == "flip") return Transform::flip;
  throw ParameterError("unknown transform '" + std::string(name) + "'");
}

std::string_view to_string(Transform t) {
  switch (t) {
    case Transform::jitter:
      return "jitter";
    case Transform::scale:
      return "scale";
    case Transform::shift:
      return "shift";
    case Transform::permute:
      return "permute";
    case Transform::flip:
      return "flip";
  }
  return "?";
}

FlipMode parse_flip_mode(std::string_view name) {
  if (name == "time_reverse") return FlipMode::time_reverse;
  if (name == "value_mirror") return FlipMode::value_mirror;
  throw ParameterError("unknown flip mode '" + std::string(name) + "'");
}

std::string_view to_string(FlipMode m) { return m == FlipMode::time_reverse ? "time_reverse" : "value_mirror"; }

void AugmentPolicy::validate(int num_classes) const {
  if (factors.size() != static_cast<std::size_t>(num_classes)) {
    throw ParameterError("augment: " + std::to_string(factors.size()) + " oversample factors for " +
                         std::to_string(num_classes) + " classes");
  }
  for (double f : factors)
    if (!(f >= 1.0) || !std::isfinite(f)) throw ParameterError("augment: oversample factors must be finite and >= 1");
  if (transforms.empty()) throw ParameterError("augment: no transforms enabled");
  if (!(jitter_fraction > 0.0) || !std::isfinite(jitter_fraction)) throw ParameterError("augment: jitter_fraction must be > 0");
  if (!(scale_low > 0.0) || !(scale_high >= scale_low) || !std::isfinite(scale_high)) {
    throw ParameterError("augment: scale range needs 0 < low <= high");
  }
  if (shift_units < 1) throw ParameterError("augment: shift_units must be >= 1");
  if (permute_segments < 2) throw ParameterError("augment: permute_segments must be >= 2");
}

namespace {

FeatureSequence derived(const FeatureSequence& s) {
  FeatureSequence out = s;
  out.origin = data::Origin::augmented;
  return out;
}

std::vector<std::size_t> segment_bounds(std::size_t steps, std::size_t n) {
  std::vector<std::size_t> b(n + 1);
  for (std::size_t k = 0; k <= n; ++k) b[k] = k * steps / n;
  return b;
}

}  // namespace

FeatureSequence jitter(const FeatureSequence& s, double fraction, Rng& rng) {
  if (!(fraction > 0.0)) throw ParameterError("jitter: fraction must be > 0");
  FeatureSequence out = derived(s);
  const std::size_t steps = s.length(), width = s.channels();
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t j = 0; j < width; ++j) {
    double lo = s.frames.at(0, j), hi = lo;
    for (std::size_t t = 1; t < steps; ++t) {
      lo = std::min(lo, s.frames.at(t, j));
      hi = std::max(hi, s.frames.at(t, j));
    }
    const double sigma = fraction * (hi - lo);
    if (sigma == 0.0) continue;
    for (std::size_t t = 0; t < steps; ++t) out.frames.at(t, j) += sigma * noise(rng);
  }
  return out;
}

FeatureSequence scale_by(const FeatureSequence& s, double k) {
  FeatureSequence out = derived(s);
  for (double& v : out.frames.data()) v *= k;
  return out;
}

FeatureSequence magnitude_scale(const FeatureSequence& s, double low, double high, Rng& rng) {
  if (!(low > 0.0) || !(high >= low)) throw ParameterError("magnitude_scale: need 0 < low <= high");
  const double k = low == high ? low : std::uniform_real_distribution<double>(low, high)(rng);
  return scale_by(s, k);
}

FeatureSequence shift_by(const FeatureSequence& s, long long u) {
  FeatureSequence out = derived(s);
  const long long steps = static_cast<long long>(s.length());
  const std::size_t width = s.channels();
  for (long long t = 0; t < steps; ++t) {
    const long long src = std::clamp(t - u, 0LL, steps - 1);
    std::copy_n(s.frames.raw() + src * static_cast<long long>(width), width, out.frames.raw() + t * static_cast<long long>(width));
  }
  return out;
}

FeatureSequence time_shift(const FeatureSequence& s, std::size_t max_units, Rng& rng) {
  if (max_units < 1 || max_units >= s.length()) {
    throw ParameterError("time_shift: max_units must be in [1, T) with T=" + std::to_string(s.length()));
  }
  const long long m = static_cast<long long>(max_units);
  // 2m nonzero values: map [0, 2m) onto -m..-1, 1..m
  long long u = std::uniform_int_distribution<long long>(0, 2 * m - 1)(rng) - m;
  if (u >= 0) ++u;
  return shift_by(s, u);
}

FeatureSequence permute_with(const FeatureSequence& s, std::size_t n, std::span<const std::size_t> order) {
  if (n < 2 || n > s.length()) {
    throw ParameterError("permute_segments: n_segments must be in [2, T] with T=" + std::to_string(s.length()));
  }
  if (order.size() != n) throw ParameterError("permute_segments: order must list every segment once");
  std::vector<std::size_t> check(order.begin(), order.end());
  std::sort(check.begin(), check.end());
  for (std::size_t k = 0; k < n; ++k)
    if (check[k] != k) throw ParameterError("permute_segments: order is not a permutation");

  FeatureSequence out = derived(s);
  const auto bounds = segment_bounds(s.length(), n);
  const std::size_t width = s.channels();
  std::size_t t = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t from = bounds[order[k]], to = bounds[order[k] + 1];
    std::copy(s.frames.raw() + from * width, s.frames.raw() + to * width, out.frames.raw() + t * width);
    t += to - from;
  }
  return out;
}

FeatureSequence permute_segments(const FeatureSequence& s, std::size_t n_segments, Rng& rng) {
  if (n_segments < 2 || n_segments > s.length()) {
    throw ParameterError("permute_segments: n_segments must be in [2, T] with T=" + std::to_string(s.length()));
  }
  std::vector<std::size_t> order(n_segments);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return permute_with(s, n_segments, order);
}

FeatureSequence flip(const FeatureSequence& s, FlipMode mode) {
  FeatureSequence out = derived(s);
  const std::size_t steps = s.length(), width = s.channels();
  if (mode == FlipMode::time_reverse) {
    for (std::size_t t = 0; t < steps; ++t)
      std::copy_n(s.frames.raw() + (steps - 1 - t) * width, width, out.frames.raw() + t * width);
    return out;
  }
  for (std::size_t j = 0; j < width; ++j) {
    double mean = 0.0;
    for (std::size_t t = 0; t < steps; ++t) mean += s.frames.at(t, j);
    mean /= static_cast<double>(steps);
    for (std::size_t t = 0; t < steps; ++t) out.frames.at(t, j) = 2.0 * mean - s.frames.at(t, j);
  }
  return out;
}

FeatureSequence apply_transform(const FeatureSequence& s, Transform t, const AugmentPolicy& p, Rng& rng) {
  switch (t) {
    case Transform::jitter:
      return jitter(s, p.jitter_fraction, rng);
    case Transform::scale:
      return magnitude_scale(s, p.scale_low, p.scale_high, rng);
    case Transform::shift:
      return time_shift(s, p.shift_units, rng);
    case Transform::permute:
      return permute_segments(s, p.permute_segments, rng);
    case Transform::flip:
      return flip(s, p.flip_mode);
  }
  throw ParameterError("unknown transform");
}

std::size_t copies_for(double factor, std::size_t n) {
  // Tolerance absorbs representation error in factors such as 1.1.
  return static_cast<std::size_t>(std::ceil((factor - 1.0) * static_cast<double>(n) - 1e-9));
}

Dataset apply_policy(const Dataset& d, const AugmentPolicy& p) {
  if (d.split() == data::Split::test) {
    throw ContractError("refusing to augment the test split: augmented test samples would leak into evaluation");
  }
  for (const auto& s : d.sequences()) {
    if (s.split == data::Split::test) {
      throw ContractError("refusing to augment test sample '" + s.sample_id + "': augmentation is train/validation only");
    }
  }
  p.validate(d.num_classes());

  std::vector<std::vector<std::size_t>> originals(static_cast<std::size_t>(d.num_classes()));
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i].origin == data::Origin::original) originals[static_cast<std::size_t>(d[i].label)].push_back(i);

  std::vector<FeatureSequence> out = d.sequences();
  for (std::size_t c = 0; c < originals.size(); ++c) {
    const auto& pool = originals[c];
    const std::size_t copies = copies_for(p.factors[c], pool.size());
    for (std::size_t k = 0; k < copies; ++k) {
      Rng rng = make_rng(p.seed, {stream::augment, c, k});
      const Transform t = p.transforms[std::uniform_int_distribution<std::size_t>(0, p.transforms.size() - 1)(rng)];
      const FeatureSequence& src = d[pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]];
      FeatureSequence copy = apply_transform(src, t, p, rng);
      copy.sample_id = src.sample_id + "#aug" + std::to_string(c) + "." + std::to_string(k);
      out.push_back(std::move(copy));
    }
  }
  return Dataset(std::move(out), d.num_classes(), d.split());
}

}  // namespace engage::augment
