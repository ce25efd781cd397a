#pragma once

// Counter-based random streams.
//
// Every draw is a pure function of (key, counter):
//
//   next_u64() = mix64(key + counter * 0x9E3779B97F4A7C15), counter += 1
//
// where mix64 is the SplitMix64 finalizer
//
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   z =  z ^ (z >> 31)
//
// Stream keys are derived from a global seed and a path of integers:
//
//   key = mix64(seed); for p in path: key = mix64(key ^ (p + 0x9E3779B97F4A7C15))
//
// so any component can reproduce the exact stream for (seed, tag, sample, draw)
// without sharing generator state.

#include <cstdint>
#include <initializer_list>

namespace trimlab {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_key(std::uint64_t seed,
                                   std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t key = mix64(seed);
  for (std::uint64_t p : path) key = mix64(key ^ (p + kGoldenGamma));
  return key;
}

/// Stream tags. Values are part of the reproducibility contract.
enum class StreamTag : std::uint64_t {
  kRealTexture = 1,
  kFakeTexture = 2,
  kInit = 3,
  kShuffle = 4,
  kAttack = 5,
  kDenoise = 6,
  kTrainAttack = 7,
};

class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(key) {}

  CounterRng(std::uint64_t seed, StreamTag tag, std::initializer_list<std::uint64_t> path = {})
      : key_(derive(seed, tag, path)) {}

  constexpr std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * kGoldenGamma);
  }

  /// Uniform on [0, 1) with 53 random bits.
  constexpr double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  constexpr double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n) noexcept;

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  static std::uint64_t derive(std::uint64_t seed, StreamTag tag,
                              std::initializer_list<std::uint64_t> path) noexcept;

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace trimlab
