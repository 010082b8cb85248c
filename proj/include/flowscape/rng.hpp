#pragma once

#include <cmath>
#include <cstdint>

namespace flowscape {

// SplitMix64 finalizer. The whole toolkit draws randomness through this one
// mixer so that results are identical across platforms and schedules.
inline uint64_t mix64(uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Key of the per-trial substream. Depends only on (seed, trial), never on
// execution order, so parallel and sequential runs draw identical numbers.
inline uint64_t substream_key(uint64_t seed, uint64_t trial) {
  return mix64(seed ^ mix64(trial + 0x632BE59BD9B4E019ULL));
}

// Counter-based generator in SplitMix64 counter mode: the n-th output is a
// pure function of (key, n).
class CounterRng {
 public:
  explicit CounterRng(uint64_t key) : key_(key) {}

  uint64_t next_u64() { return mix64(key_ + counter_++ * 0x9E3779B97F4A7C15ULL); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; consumes two uniforms per pair, caches the second deviate.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    // Avoid log(0).
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  uint64_t key() const { return key_; }

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace flowscape
