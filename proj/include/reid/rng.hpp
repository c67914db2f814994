#pragma once

#include <cstdint>
#include <random>

namespace reid {

// Deterministic random source with pinned value mappings, so datasets
// regenerate identically from a seed (see README, "Determinism contract"):
//   engine    std::mt19937_64 (algorithm fixed by the standard)
//   uniform   high 53 bits of one engine draw, scaled to [0,1)
//   normal    trigonometric Box-Muller on two uniform draws, pair cached
//   integers  rejection sampling on engine draws (no modulo bias)
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double normal();

  // Uniform integer in [0, bound), bound >= 1.
  std::uint64_t uniform_below(std::uint64_t bound);

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace reid
