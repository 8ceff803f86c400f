#include "lfm/rng.hpp"

#include <cmath>
#include <numbers>

namespace lfm {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kSplitSalt = 0xD1B54A32D192ED03ULL;
}  // namespace

std::uint64_t mix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : key_(mix64(seed ^ 0x6A09E667F3BCC909ULL)) {}

std::uint64_t Rng::next_u64() {
  const std::uint64_t c = counter_++;
  return mix64(key_ ^ mix64(c * kGolden + 0x3C6EF372FE94F82BULL));
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = n * (UINT64_MAX / n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  // Box-Muller; one variate per call keeps the stream position simple.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Tensor Rng::normal_tensor(std::size_t rows, std::size_t cols) {
  Tensor out({rows, cols});
  for (double& v : out.storage()) v = normal();
  return out;
}

Tensor Rng::uniform_tensor(std::size_t rows, std::size_t cols, double lo, double hi) {
  Tensor out({rows, cols});
  for (double& v : out.storage()) v = uniform(lo, hi);
  return out;
}

Rng Rng::split(std::uint64_t index) const {
  return Rng(mix64(key_ ^ mix64(index ^ kSplitSalt)), 0);
}

Rng Rng::split(std::string_view name) const {
  // FNV-1a over the name, then the indexed split.
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  return Rng(mix64(key_ ^ mix64(h + kGolden)), 0);
}

}  // namespace lfm
