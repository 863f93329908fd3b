#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace corv {

/// SplitMix64 finaliser; used both as the stream output function and for
/// deriving child seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic seed for replicate `index` of stream family `family`.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t family,
                                    std::uint64_t index) noexcept {
  return mix64(mix64(base ^ 0x6a09e667f3bcc909ULL) + mix64(family + 0x3c6ef372fe94f82bULL) +
               index * 0x9e3779b97f4a7c15ULL);
}

/// Counter-based 64-bit engine: output k is mix64(key + (k+1) * golden).
/// Satisfies UniformRandomBitGenerator; the position can be read and set,
/// so any draw of a stream is addressable without replaying it.
class CounterEngine {
 public:
  using result_type = std::uint64_t;

  explicit CounterEngine(std::uint64_t seed = 0) noexcept : key_(mix64(seed)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
  }

  std::uint64_t position() const noexcept { return counter_; }
  void seek(std::uint64_t position) noexcept { counter_ = position; }
  void discard(std::uint64_t n) noexcept { counter_ += n; }

  friend bool operator==(const CounterEngine&, const CounterEngine&) = default;

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Per-chain random stream: standard normal and uniform draws.
class ChainRng {
 public:
  explicit ChainRng(std::uint64_t seed = 0) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return std::generate_canonical<double, 53>(engine_); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }

  CounterEngine& engine() noexcept { return engine_; }

 private:
  CounterEngine engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace corv
