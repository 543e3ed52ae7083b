#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace rad {

// Deterministic random source. All randomness in the project flows through
// explicitly seeded instances of this class; there is no global generator.
// The uniform/normal transforms are written out here instead of using
// <random> distributions so that streams are stable across standard
// libraries, not just across runs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(mix(seed)) {}

  std::uint64_t next_u64() {
    // xorshift* variant seeded through splitmix
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1DULL;
  }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // uniform integer in [0, bound), bound > 0
  std::uint64_t uniform_int(std::uint64_t bound) {
    const std::uint64_t limit = bound * (UINT64_MAX / bound);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % bound;
  }

  // Box-Muller; two uniforms consumed per call
  double normal(double stddev) {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return stddev * std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Independent child stream; (seed, tag) fully determines it.
  Rng split(std::uint64_t tag) const {
    return Rng(mix(seed_ + 0x9E3779B97F4A7C15ULL * (tag + 1)));
  }

  std::uint64_t seed() const { return seed_; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    // splitmix64 finalizer; also guards against the all-zero state
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z = z ^ (z >> 31);
    return z == 0 ? 0x1234567890ABCDEFULL : z;
  }

  std::uint64_t seed_;
  std::uint64_t state_;
};

}  // namespace rad
