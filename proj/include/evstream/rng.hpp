#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace evstream {

// Deterministic random source. mt19937_64's output sequence is pinned by the
// standard, and all derived draws below use explicit arithmetic instead of
// std::*_distribution (whose algorithms are implementation-defined), so equal
// seeds give equal streams on every platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1), 53 bits of mantissa.
  double next_unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Standard exponential via inverse CDF; finite because next_unit() < 1.
  double next_exp() { return -std::log1p(-next_unit()); }

  // Uniform integer in [0, n) by multiply-shift.
  uint32_t next_below(uint32_t n) {
    return static_cast<uint32_t>(
        (static_cast<unsigned __int128>(engine_()) * n) >> 64);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace evstream
