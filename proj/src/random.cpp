#include "doda/random.hpp"

#include <limits>

namespace doda {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

RandomStream::RandomStream(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

std::uint64_t RandomStream::next_u64() {
  ++draws_;
  return engine_();
}

double RandomStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double RandomStream::symmetric(double half_range) {
  // 2^53 + 1 equally spaced values covering both endpoints.
  const std::uint64_t k = next_u64() % ((std::uint64_t{1} << 53) + 1);
  return half_range * (static_cast<double>(k) * 0x1.0p-52 - 1.0);
}

std::size_t RandomStream::index(std::size_t n) {
  const auto range = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return static_cast<std::size_t>(x % range);
}

// Always consumes exactly one draw so call sequences stay aligned across p.
bool RandomStream::bernoulli(double p) { return uniform() < p; }

RandomStream RandomStream::derive(std::uint64_t key) const {
  return RandomStream(splitmix64(seed_ ^ splitmix64(key + 0x632BE59BD9B4E019ULL)));
}

}  // namespace doda
