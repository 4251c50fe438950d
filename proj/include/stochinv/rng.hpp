#pragma once

#include <cstdint>
#include <random>

namespace stochinv {

// Deterministic random source. mt19937_64 has a standard-specified output
// sequence and every transform below uses only integer bit manipulation plus
// the library's own inverse normal CDF, so a (seed, stream) pair reproduces
// the same values bit for bit on any conforming platform.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed, std::uint64_t stream = 0);

  // Uniform on the open interval (0,1); never returns an exact endpoint.
  double uniform01();

  // Uniform on [lo, hi).
  double uniform(double lo, double hi);

  // Standard normal deviate via inverse CDF of uniform01.
  double normal();

  // Integer uniform on {0, ..., n-1}, n >= 1, by bitmask rejection.
  std::uint64_t uniform_below(std::uint64_t n);

  // Child source with an independent stream, stable under call order.
  RandomSource derive(std::uint64_t k) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
};

}  // namespace stochinv
