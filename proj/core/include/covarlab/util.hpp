#ifndef COVARLAB_UTIL_HPP
#define COVARLAB_UTIL_HPP

#include <cstdint>
#include <string>
#include <string_view>

namespace covarlab {

inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
  std::uint64_t h = seed;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v);

}  // namespace covarlab

#endif
