#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace fractalp {

// FNV-1a, used for content fingerprints and cache keys. Stable across runs
// and platforms, unlike std::hash.
inline uint64_t fnv64(std::string_view data, uint64_t seed = 0xcbf29ce484222325ull) {
  uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string fnv64_hex(std::string_view data);

}  // namespace fractalp
