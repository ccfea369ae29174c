#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace stc {

/// Derives an independent stream seed from a base seed. splitmix64 finalizer,
/// so nearby (seed, stream) pairs land far apart.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic RNG. mt19937_64 is fully specified by the standard and the
/// distributions below are hand-rolled, so sequences are identical across
/// platforms and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(derive_seed(seed, 0)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  float uniform_float(float lo, float hi) {
    return static_cast<float>(uniform(static_cast<double>(lo), static_cast<double>(hi)));
  }

  /// Standard normal via Box-Muller (no cached second value, so the
  /// draw count per call is fixed).
  double normal() {
    double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  /// Uniform index in [0, n). Lemire's multiply-shift; integer-only, so index
  /// sequences reproduce bit-for-bit everywhere.
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(engine_()) * static_cast<unsigned __int128>(n)) >> 64);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace stc
