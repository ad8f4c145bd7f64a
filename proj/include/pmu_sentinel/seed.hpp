// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace pmu {

/// Independent, reproducible child seed for (master, path...). Uses
/// std::seed_seq, whose mixing algorithm is fixed by the standard.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> path) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(master),
                                   static_cast<std::uint32_t>(master >> 32)};
  for (std::uint64_t p : path) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

/// Stable numeric tag for a stage name, for use in derive_seed paths.
inline std::uint64_t seed_tag(std::string_view name) {
  std::uint64_t h = 0;
  for (unsigned char c : name) h = h * 131 + c;
  return h;
}

}  // namespace pmu
