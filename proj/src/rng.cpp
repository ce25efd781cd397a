#include "trimlab/rng.hpp"

namespace trimlab {

std::uint64_t CounterRng::below(std::uint64_t n) noexcept {
  if (n <= 1) return 0;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r = next_u64();
  while (r >= limit) r = next_u64();
  return r % n;
}

std::uint64_t CounterRng::derive(std::uint64_t seed, StreamTag tag,
                                 std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t key = mix64(seed);
  key = mix64(key ^ (static_cast<std::uint64_t>(tag) + kGoldenGamma));
  for (std::uint64_t p : path) key = mix64(key ^ (p + kGoldenGamma));
  return key;
}

}  // namespace trimlab
