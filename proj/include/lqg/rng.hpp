#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace lqg {

namespace detail {

inline constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer. Bijective 64-bit mixer, good avalanche.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace detail

// Counter-based random stream. Each consumer owns a stream keyed by
// (seed, name, index); values are a pure function of (key, counter), so
// adding a new consumer never perturbs the draws of existing ones, and a
// stream can be resumed exactly by seeking its counter.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0)
      : key_(detail::mix64(detail::mix64(seed ^ detail::fnv1a(name)) +
                           index * detail::kGamma)) {}

  std::uint64_t next_raw() { return detail::mix64(key_ + (++counter_) * detail::kGamma); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_raw() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller. Consumes two counter ticks; the second
  // branch is discarded so the mapping counter -> value stays stateless.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log() finite
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n). Lemire multiply-shift; the O(n/2^64) bias is
  // far below anything observable here.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_raw()) * n) >> 64);
  }

  std::uint64_t counter() const { return counter_; }
  void seek(std::uint64_t counter) { counter_ = counter; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Fisher-Yates permutation of {0, ..., n-1}.
inline std::vector<std::size_t> random_permutation(std::size_t n, RngStream& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace lqg
