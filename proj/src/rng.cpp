#include "dcl/rng.hpp"

#include <cmath>
#include <numbers>

namespace dcl {

std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

Rng::Rng(std::uint64_t seed) noexcept : key_(mix64(seed ^ 0x6a09e667f3bcc909ULL)) {}

std::uint64_t Rng::next_u64() noexcept {
  const std::uint64_t c = counter_++;
  return mix64(mix64(c * 0x9e3779b97f4a7c15ULL ^ key_) + key_);
}

double Rng::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) noexcept {
  // Lemire's multiply-shift with rejection for exact uniformity.
  std::uint64_t x = next_u64();
  __uint128_t m = static_cast<__uint128_t>(x) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      x = next_u64();
      m = static_cast<__uint128_t>(x) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double Rng::normal() noexcept {
  const double u1 = uniform_open0();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::categorical(std::span<const double> probs) noexcept {
  double total = 0.0;
  for (double p : probs) total += p;
  const double target = uniform() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last_positive = i;
    if (target < acc) return i;
  }
  return last_positive;
}

Rng Rng::split(std::uint64_t stream) const noexcept {
  return Rng(mix64(key_ ^ mix64(stream + 0x243f6a8885a308d3ULL)), 0, 0);
}

}  // namespace dcl
