#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace pathomil {

// The toolkit pins one PRNG construction for every stochastic operation so
// that runs are bit-reproducible across platforms and compilers:
//   - seeds are expanded with splitmix64,
//   - the stream itself is xoshiro256**,
//   - uniform doubles are (next() >> 11) * 2^-53 in [0, 1),
//   - Gaussians come from Box-Muller, consuming exactly two uniforms per
//     call in a fixed order (the sine partner is never cached),
//   - bounded integers use the multiply-shift reduction,
//   - shuffles are Fisher-Yates from the top index down.

// One step of the splitmix64 generator; advances `state` and returns the
// mixed output. Also the building block for deriving sub-stream seeds.
uint64_t splitmix64_next(uint64_t& state);

// Derives the seed of an independent sub-stream (per bag, per fold, ...)
// from a master seed and a stream index. Uses one splitmix64 mix of
// master + (index + 1) * golden-ratio increment, so index 0 differs from
// the master stream itself.
uint64_t derive_seed(uint64_t master, uint64_t index);

// xoshiro256** seeded via splitmix64 expansion of a 64-bit seed.
class RngStream {
 public:
  explicit RngStream(uint64_t seed);

  uint64_t next_u64() {
    const uint64_t result = rotl_(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl_(s_[3], 45);
    return result;
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller: consumes u1, u2 in order and returns
  // sqrt(-2 ln(1 - u1)) * cos(2 pi u2).
  double gaussian();

  // Uniform integer in [0, n); n must be positive.
  uint64_t bounded(uint64_t n);

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (size_t i = v.size() - 1; i > 0; --i) {
      size_t j = static_cast<size_t>(bounded(i + 1));
      std::swap(v[i], v[j]);
    }
  }

 private:
  static uint64_t rotl_(uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  uint64_t s_[4];
};

}  // namespace pathomil
