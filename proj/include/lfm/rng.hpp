#pragma once

#include <cstdint>
#include <string_view>

#include "lfm/tensor.hpp"

namespace lfm {

// Counter-based splittable generator. The output at position i is a pure
// function of (key, i), so streams are reproducible across platforms and a
// child stream never depends on how much of its parent has been consumed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  Tensor normal_tensor(std::size_t rows, std::size_t cols);
  Tensor uniform_tensor(std::size_t rows, std::size_t cols, double lo, double hi);

  // Child streams keyed by index or by name.
  Rng split(std::uint64_t index) const;
  Rng split(std::string_view name) const;

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  Rng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

}  // namespace lfm
