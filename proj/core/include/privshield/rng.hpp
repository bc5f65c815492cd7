#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace privshield {

// SplitMix64 generator. Used for every random decision in the toolkit instead
// of <random> distributions, whose output is implementation-defined; this
// keeps datasets, initializations and training runs reproducible across
// toolchains, not just across reruns of one binary.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0; modulo bias is irrelevant here
  // (n is always tiny relative to 2^64).
  std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

  // Box-Muller, one value per call (the pair's second half is discarded so the
  // consumption pattern stays position-independent).
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = uniform_int(i);
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

 private:
  std::uint64_t state_;
};

// Derives an independent stream from (seed, tag). Tags are short role labels
// ("enc", "batch", ...) hashed with FNV-1a so call-site order cannot couple
// streams.
inline std::uint64_t derive_seed(std::uint64_t seed, const char* tag,
                                 std::uint64_t index = 0) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const char* c = tag; *c; ++c) {
    h ^= static_cast<std::uint64_t>(*c);
    h *= 1099511628211ULL;
  }
  h ^= index + 0x9E3779B97F4A7C15ULL;
  h *= 1099511628211ULL;
  return h ^ seed;
}

}  // namespace privshield
