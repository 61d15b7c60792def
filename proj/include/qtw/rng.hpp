#pragma once

#include <cstdint>

namespace qtw::rng {

// Keyed SplitMix64 finalizer. All per-trajectory / per-purpose streams are
// derived as mix64(parent_seed, index_or_tag); the function is fixed and part
// of the reproducibility contract (documented in the README).
inline uint64_t mix64(uint64_t key, uint64_t idx) {
  uint64_t z = key + 0x9E3779B97F4A7C15ull * (idx + 1ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Stream tags for deriving independent sub-streams from one run seed.
enum StreamTag : uint64_t {
  kTagTrajectory = 0x7472616A,  // dataset trajectory streams
  kTagParamInit = 0x696E6974,   // trainable parameter init
  kTagReservoir = 0x65736E72,   // frozen ESN reservoir draw
  kTagShuffle = 0x73687566,     // per-epoch batch shuffling
  kTagJitter = 0x6A697474,      // Kraus-head QR jitter
};

struct SplitMix64 {
  uint64_t state = 0;

  uint64_t next() {
    state += 0x9E3779B97F4A7C15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Uniform integer in [lo, hi); bias is negligible for the ranges used here.
  uint64_t next_index(uint64_t lo, uint64_t hi) {
    return lo + next() % (hi - lo);
  }
};

// Standard normal variates via Box-Muller on the raw SplitMix64 stream.
struct GaussianStream {
  SplitMix64 rng;
  bool has_spare = false;
  double spare = 0.0;

  explicit GaussianStream(uint64_t seed) : rng{seed} {}

  double next();
};

}  // namespace qtw::rng
