#pragma once

#include <cmath>
#include <cstdint>

namespace rsbp {

// Counter-based random source. Every draw is a pure function of
// (key, counter), so streams can be evaluated in any order and still
// reproduce bit-identically. Only fixed-width integer arithmetic feeds
// the state; floating point enters at the output transforms.

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class CounterRng {
 public:
  CounterRng() : key_(0) {}
  explicit CounterRng(std::uint64_t seed) : key_(splitmix64(seed)) {}

  // Derives an independent stream; fork(a) != fork(b) for a != b.
  CounterRng fork(std::uint64_t stream) const {
    CounterRng r;
    r.key_ = splitmix64(key_ ^ (stream * kGolden + 0x6a09e667f3bcc909ULL));
    return r;
  }

  std::uint64_t bits(std::uint64_t counter) const {
    return splitmix64(key_ ^ splitmix64(counter));
  }

  // Uniform in (0,1), never exactly 0 or 1.
  double uniform01(std::uint64_t counter) const {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(std::uint64_t counter, double lo, double hi) const {
    return lo + (hi - lo) * uniform01(counter);
  }

  // Unbiased-enough integer in [0, n): 128-bit multiply map, no rejection.
  std::uint64_t below(std::uint64_t counter, std::uint64_t n) const {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(bits(counter)) * n) >> 64);
  }

  // Standard normal via Box-Muller; consumes counters 2c and 2c+1.
  double normal(std::uint64_t counter) const {
    const double u1 = uniform01(2 * counter);
    const double u2 = uniform01(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
};

// Sequential convenience wrapper over a counter stream.
class SeqRng {
 public:
  explicit SeqRng(CounterRng rng) : rng_(rng), ctr_(0) {}
  SeqRng(std::uint64_t seed, std::uint64_t stream)
      : rng_(CounterRng(seed).fork(stream)), ctr_(0) {}

  std::uint64_t bits() { return rng_.bits(ctr_++); }
  double uniform01() { return rng_.uniform01(ctr_++); }
  double uniform(double lo, double hi) { return rng_.uniform(ctr_++, lo, hi); }
  std::uint64_t below(std::uint64_t n) { return rng_.below(ctr_++, n); }
  double normal() { return rng_.normal(ctr_++); }

 private:
  CounterRng rng_;
  std::uint64_t ctr_;
};

}  // namespace rsbp
