#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dfgl {

/// Invalid user-supplied configuration (bad probabilities, k >= m, ...).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Internal protocol violation (unresolved neighbor id, request from a
/// non-neighbor, shape mismatch). These indicate bugs, not bad input.
struct ProtocolError : std::logic_error {
  using std::logic_error::logic_error;
};

namespace detail {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Derives an independent seed for a named substream of `master`.
/// Extra integer tags (worker id, round, ...) select parallel streams.
inline uint64_t derive_seed(uint64_t master, std::string_view stream,
                            uint64_t a = 0, uint64_t b = 0) {
  uint64_t h = detail::splitmix64(master ^ detail::fnv1a(stream));
  h = detail::splitmix64(h ^ detail::splitmix64(a + 0x51ed2701));
  h = detail::splitmix64(h ^ detail::splitmix64(b + 0x2545f491));
  return h;
}

inline std::mt19937_64 make_rng(uint64_t master, std::string_view stream,
                                uint64_t a = 0, uint64_t b = 0) {
  return std::mt19937_64(derive_seed(master, stream, a, b));
}

}  // namespace dfgl
