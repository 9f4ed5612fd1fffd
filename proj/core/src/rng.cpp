#include "pathomil/rng.hpp"

#include <cmath>
#include <numbers>

#include "pathomil/errors.hpp"

namespace pathomil {

namespace {
constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}  // namespace

uint64_t splitmix64_next(uint64_t& state) {
  uint64_t z = (state += kGolden);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

uint64_t derive_seed(uint64_t master, uint64_t index) {
  uint64_t state = master + (index + 1) * kGolden;
  return splitmix64_next(state);
}

RngStream::RngStream(uint64_t seed) {
  uint64_t state = seed;
  for (auto& word : s_) {
    word = splitmix64_next(state);
  }
}

double RngStream::gaussian() {
  double u1 = uniform01();
  double u2 = uniform01();
  // 1 - u1 lies in (0, 1], so the log argument is never zero.
  double r = std::sqrt(-2.0 * std::log(1.0 - u1));
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

uint64_t RngStream::bounded(uint64_t n) {
  if (n == 0) {
    throw ContractError("bounded draw requires a positive range");
  }
  return static_cast<uint64_t>(
      (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

}  // namespace pathomil
