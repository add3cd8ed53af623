#pragma once

#include <cstdint>

namespace densescan {

// splitmix64: cheap, well-mixed 64-bit hash; the basis for all derived seeds
// so that per-item randomness is independent of scheduling.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return splitmix64(base ^ splitmix64(index + 0x632be59bd9b4e019ull));
}

// Deterministic per-coordinate noise in [-1, 1]; pure in (seed, x, y).
inline double coord_noise(std::uint64_t seed, std::int64_t x, std::int64_t y) {
  const std::uint64_t mixed =
      splitmix64(static_cast<std::uint64_t>(x)) ^ (splitmix64(static_cast<std::uint64_t>(y)) << 1);
  const std::uint64_t h = splitmix64(seed ^ mixed);
  return static_cast<double>(h >> 11) * (2.0 / 9007199254740992.0) - 1.0;
}

}  // namespace densescan
