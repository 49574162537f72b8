#pragma once

#include <cstdint>
#include <string>

namespace railab {

// Seeded counter-free RNG (xoshiro256**). The standard <random> engines are
// portable but their distributions are not; all draws here are fully
// specified so trajectories replay bit-identically on any platform.
class Rng {
 public:
  Rng() : Rng(0) {}

  explicit Rng(std::uint64_t seed) { reseed(seed); }

  void reseed(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
  }

  // Derives an independent stream; used to give workers/episodes their own
  // generators without sharing draw order.
  static Rng derive(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t x = seed;
    std::uint64_t a = splitmix64(x);
    x ^= 0x9e3779b97f4a7c15ULL * (stream + 1);
    return Rng(a ^ splitmix64(x));
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform integer in [0, bound). Fixed-point multiply; the (negligible)
  // modulo bias is acceptable because only determinism matters here.
  std::uint32_t next_below(std::uint32_t bound) {
    return static_cast<std::uint32_t>(
        (static_cast<std::uint64_t>(static_cast<std::uint32_t>(next_u64())) * bound) >> 32);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform double in [lo, hi).
  double next_range(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  bool next_bool() { return (next_u64() >> 63) != 0; }

  bool operator==(const Rng& other) const {
    for (int i = 0; i < 4; ++i)
      if (state_[i] != other.state_[i]) return false;
    return true;
  }

  const std::uint64_t* words() const { return state_; }

 private:
  static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

  std::uint64_t state_[4];
};

}  // namespace railab
