#pragma once

#include <cstdint>
#include <string_view>

#include "normal.hpp"

namespace cdantzig {

// Counter-based generator.
//
// The value at counter i of a stream with key k is
//
//     mix64(k + (i + 1) * 0x9E3779B97F4A7C15)
//
// where mix64 is the SplitMix64 finalizer (Stafford variant 13). This is the
// SplitMix64 sequence evaluated at an arbitrary position, so any draw can be
// addressed directly and streams never depend on consumption order.
//
// Stream keys for simulation are derived as
//
//     mix64(mix64(master ^ mix64(fnv1a(label))) + replicate * 0x9E3779B97F4A7C15)
//
// Uniforms take the top 53 bits and are centred in their bin, giving values
// strictly inside (0, 1). Gaussians are the AS 241 quantile of that uniform.

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a(std::string_view bytes) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

constexpr std::uint64_t derive_stream_key(std::uint64_t master_seed, std::string_view label,
                                          std::uint64_t replicate) noexcept {
  return mix64(mix64(master_seed ^ mix64(fnv1a(label))) + replicate * kGoldenGamma);
}

class CounterRng {
 public:
  constexpr explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

  constexpr std::uint64_t key() const noexcept { return key_; }

  constexpr std::uint64_t bits(std::uint64_t counter) const noexcept {
    return mix64(key_ + (counter + 1) * kGoldenGamma);
  }

  constexpr double uniform(std::uint64_t counter) const noexcept {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal(std::uint64_t counter) const { return normal_quantile(uniform(counter)); }

 private:
  std::uint64_t key_;
};

/// Sequential view over a CounterRng, for code that just wants "the next draw".
class RngStream {
 public:
  explicit RngStream(std::uint64_t key, std::uint64_t start = 0) noexcept
      : rng_(key), counter_(start) {}

  std::uint64_t next_bits() noexcept { return rng_.bits(counter_++); }
  double next_uniform() noexcept { return rng_.uniform(counter_++); }
  double next_normal() { return rng_.normal(counter_++); }

  /// Uniform integer in [0, bound) by multiply-shift; bias is below 2^-64 * bound.
  std::uint64_t next_below(std::uint64_t bound) noexcept {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_bits()) * bound) >> 64);
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  CounterRng rng_;
  std::uint64_t counter_;
};

}  // namespace cdantzig
