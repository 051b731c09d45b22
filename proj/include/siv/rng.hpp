#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace siv {

// Deterministic, platform-independent generator: xoshiro256++ seeded through
// splitmix64. Standard-library distributions are implementation-defined, so
// uniform and normal draws are produced here directly to keep harness output
// byte-identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t key) {
    std::uint64_t s = key;
    for (auto& w : state_) w = splitmix64(s);
  }

  // Stream for replicate `rep` of cell `cell`; tags below 2^62 are reserved
  // for replicate indices, higher ones for cell-plan work (tuning, pilots).
  static Rng for_replicate(std::uint64_t base_seed, std::uint64_t cell, std::uint64_t rep) {
    std::uint64_t k = base_seed;
    k = splitmix64(k) ^ (cell * 0x9E3779B97F4A7C15ULL);
    k = splitmix64(k) ^ (rep * 0xBF58476D1CE4E5B9ULL);
    return Rng(splitmix64(k));
  }

  static constexpr std::uint64_t kTunerTag = (1ULL << 62) + 1;
  static constexpr std::uint64_t kPilotTag = (1ULL << 62) + 2;

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on the open interval (0,1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; two uniforms per draw, no cached state.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  static std::uint64_t splitmix64(std::uint64_t& s) {
    std::uint64_t z = (s += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::array<std::uint64_t, 4> state_;
};

}  // namespace siv
