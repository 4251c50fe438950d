#include "stochinv/rng.hpp"

#include "stochinv/error.hpp"
#include "stochinv/special.hpp"

namespace stochinv {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream * 2 + 1));
}

}  // namespace

RandomSource::RandomSource(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(mix_seed(seed, stream)) {}

double RandomSource::uniform01() {
  // Top 53 bits, centered on the lattice so 0 and 1 are unreachable.
  const std::uint64_t x = engine_();
  return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
}

double RandomSource::uniform(double lo, double hi) {
  if (!(lo < hi)) throw DomainError("RandomSource::uniform: need lo < hi");
  return lo + (hi - lo) * uniform01();
}

double RandomSource::normal() { return std_normal_quantile(uniform01()); }

std::uint64_t RandomSource::uniform_below(std::uint64_t n) {
  if (n == 0) throw DomainError("RandomSource::uniform_below: n must be >= 1");
  if (n == 1) return 0;
  std::uint64_t mask = n - 1;
  mask |= mask >> 1;
  mask |= mask >> 2;
  mask |= mask >> 4;
  mask |= mask >> 8;
  mask |= mask >> 16;
  mask |= mask >> 32;
  for (;;) {
    const std::uint64_t x = engine_() & mask;
    if (x < n) return x;
  }
}

RandomSource RandomSource::derive(std::uint64_t k) const {
  return RandomSource(mix_seed(seed_, stream_),
                      splitmix64(stream_ ^ (k + 0x5d4f1e2b3c6a7980ULL)));
}

}  // namespace stochinv
