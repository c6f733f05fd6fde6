#pragma once

#include <cstdint>
#include <span>

namespace dcl {

/// Counter-based random stream.
///
/// Every draw is a pure function of (key, counter), so a stream can be
/// reconstructed from its seed and position, and `split` derives
/// statistically independent child streams without touching the parent.
/// Distribution transforms are implemented here rather than taken from
/// <random> so that outputs are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) noexcept;

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Uniform on (0, 1].
  double uniform_open0() noexcept { return 1.0 - uniform(); }
  /// Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n) noexcept;
  double normal() noexcept;
  /// Index drawn with probability probs[i] / sum(probs).
  std::size_t categorical(std::span<const double> probs) noexcept;

  /// Child stream keyed by `stream`; the parent is left unchanged.
  Rng split(std::uint64_t stream) const noexcept;

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  Rng(std::uint64_t key, std::uint64_t counter, int) noexcept : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace dcl
