// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace engage {

using Rng = std::mt19937_64;

// Independent generator for a named sub-stream of a run seed, e.g.
// make_rng(seed, {stream::augment, class_index, copy_index}).
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * stream.size());
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (std::uint64_t s : stream) push(s);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

// Stream tags so that unrelated consumers of one run seed never collide.
namespace stream {
inline constexpr std::uint64_t synthetic = 1;
inline constexpr std::uint64_t split = 2;
inline constexpr std::uint64_t augment = 3;
inline constexpr std::uint64_t init = 4;
inline constexpr std::uint64_t sampler = 5;
inline constexpr std::uint64_t dropout = 6;
inline constexpr std::uint64_t member = 7;
}  // namespace stream

}  // namespace engage
