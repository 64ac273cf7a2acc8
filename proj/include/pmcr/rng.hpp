#pragma once

#include <cstdint>

namespace pmcr {

// splitmix64: the single seedable generator behind weight init, epoch
// shuffling and augmentation. Pure 64-bit integer arithmetic, so streams
// are reproducible bit-for-bit across platforms.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed = 0) : state_(seed) {}

  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t next_u64() { return mix(state_ += 0x9e3779b97f4a7c15ull); }

  // uniform in [0, 1), 53-bit resolution
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // uniform integer in [0, n); modulo bias is negligible for n << 2^64
  uint64_t next_below(uint64_t n) { return next_u64() % n; }

  bool coin() { return (next_u64() & 1ull) != 0; }

  // independent stream derived from this state and a salt
  SplitMix64 fork(uint64_t salt) const {
    return SplitMix64(mix(state_ ^ mix(salt + 0x632be59bd9b4e019ull)));
  }

 private:
  uint64_t state_;
};

}  // namespace pmcr
