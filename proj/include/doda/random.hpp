#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace doda {

// Seeded pseudo-random stream. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; all derived draws (uniform reals,
// bounded integers, Bernoulli) are computed here rather than through
// <random> distributions, which are implementation-defined.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t draws() const noexcept { return draws_; }

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform in [-half_range, half_range].
  double symmetric(double half_range);
  // Uniform integer in [0, n). n must be > 0.
  std::size_t index(std::size_t n);
  bool bernoulli(double p);

  // Independent child stream keyed by (this seed, key); does not advance this stream.
  RandomStream derive(std::uint64_t key) const;

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = index(i);
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t draws_ = 0;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace doda
