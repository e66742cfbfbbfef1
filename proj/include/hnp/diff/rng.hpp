#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace hnp::diff {

#ifdef HNP_SINGLE_PRECISION
using real = float;
#else
using real = double;
#endif

/// Seeded random stream. Uniform and normal draws are generated from raw
/// mt19937_64 output (no library distributions), so the value sequence is
/// pinned by the seed alone and reproducible bit-for-bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  real uniform() {
    return static_cast<real>((engine_() >> 11) * 0x1.0p-53);
  }

  real uniform(real lo, real hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller, one fresh pair per call (no cached
  /// second value, so the draw count per call is always two uniforms).
  real normal() {
    real u1 = uniform();
    while (u1 <= real(0)) u1 = uniform();
    const real u2 = uniform();
    const real r = std::sqrt(real(-2) * std::log(u1));
    return r * std::cos(real(2) * real(M_PI) * u2);
  }

  /// Integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // modulo bias is < 2^-50 for the sizes used here
    return engine_() % n;
  }

  /// Derives an independent, reproducible child seed.
  std::uint64_t fork_seed(std::uint64_t salt) {
    return split_mix(engine_() ^ (salt * 0x9e3779b97f4a7c15ull));
  }

  static std::uint64_t split_mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

 private:
  std::mt19937_64 engine_;
};

/// Fisher-Yates shuffle driven by Rng (std::shuffle's draw pattern is
/// implementation-defined; this one is pinned).
template <typename Vec>
void shuffle(Vec& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace hnp::diff
