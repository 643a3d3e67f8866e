#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace llgs {

// SplitMix64 finalizer. Used both for seed derivation and for the
// counter-based draws below.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stateless uniform draw in [0,1) keyed by (seed, a, b). Draws are
// independent of evaluation order, which makes parallel consumers
// deterministic across thread counts.
inline double hash01(uint64_t seed, uint64_t a, uint64_t b) {
  uint64_t h = mix64(seed ^ 0x2545f4914f6cdd1dULL);
  h = mix64(h ^ mix64(a + 1));
  h = mix64(h ^ mix64(b + 1));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Sequential RNG with explicitly-specified output algorithms so that
// streams are reproducible across standard libraries (std distributions
// are implementation-defined; these are not).
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // [0,1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; caches the second variate.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 1.0 - uniform();  // (0,1], keeps log() finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  // [0,n) via Lemire multiply-shift (bias < 2^-64, order-stable)
  int uniform_int(int n) {
    return static_cast<int>(
        (static_cast<unsigned __int128>(engine_()) * static_cast<unsigned __int128>(n)) >> 64);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace llgs
