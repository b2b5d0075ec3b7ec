#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace tbsfm {

// Deterministic random stream. All sampling goes through this wrapper so that
// results do not depend on the standard library's distribution implementations.
// Sub-streams derived with fork() are independent of the draw order of the
// parent, which keeps parallel consumers reproducible.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(mix(seed)), seed_(mix(seed)) {}

  // Derived stream for a keyed task, e.g. fork(image_id, take_id).
  Rng fork(uint64_t a, uint64_t b = 0) const {
    uint64_t h = seed_;
    h = mix(h ^ mix(a + 0x9e3779b97f4a7c15ULL));
    h = mix(h ^ mix(b + 0x7f4a7c159e3779b9ULL));
    return Rng(h, Forked{});
  }

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

  // Zero-mean Gaussian via Box-Muller.
  double normal(double sigma = 1.0) {
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<size_t>(uniform_int(static_cast<int>(i)))]);
    }
  }

 private:
  struct Forked {};
  Rng(uint64_t state, Forked) : engine_(state), seed_(state) {}

  static uint64_t mix(uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::mt19937_64 engine_;
  uint64_t seed_ = 0;
};

}  // namespace tbsfm
