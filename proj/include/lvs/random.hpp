#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace lvs {

using Rng = std::mt19937_64;

/// Builds an independent generator for one stream of work. `stream` identifies the work item
/// (cell index, sample index, ...) so results do not depend on scheduling or thread count.
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * stream.size());
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto s : stream) push(s);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

}  // namespace lvs
