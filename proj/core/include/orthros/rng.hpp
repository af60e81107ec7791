#ifndef ORTHROS_RNG_HPP
#define ORTHROS_RNG_HPP

#include <cmath>
#include <cstdint>

namespace orthros {

// SplitMix64 (Steele et al.). The single PRNG used everywhere so that
// corpora, mask draws and dropout are bit-identical across platforms;
// std:: distributions are implementation-defined and must not be used.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed = 0) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [lo, hi] inclusive.
  int64_t range(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(next_u64() % span);
  }

  // Box-Muller; one fresh draw per call keeps streams easy to reason about.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Derive an independent stream; tag keeps sub-streams (dropout, masks,
  // shuffling, ...) from colliding.
  SplitMix64 split(uint64_t tag) {
    SplitMix64 mixer(state_ ^ (0x9e3779b97f4a7c15ULL * (tag + 1)));
    return SplitMix64(mixer.next_u64());
  }

 private:
  uint64_t state_;
};

}  // namespace orthros

#endif
