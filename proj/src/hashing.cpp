#include "fractalp/hashing.hpp"

#include <cstdio>

namespace fractalp {

std::string fnv64_hex(std::string_view data) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv64(data)));
  return std::string(buf);
}

}  // namespace fractalp
