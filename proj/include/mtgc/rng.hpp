// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace mtgc {

/// Position of a stochastic draw in the training schedule: global round t,
/// group round e, local step h.
struct DrawIndex {
  std::uint64_t t = 0;
  std::uint64_t e = 0;
  std::uint64_t h = 0;

  bool operator==(const DrawIndex&) const = default;
};

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t mix(std::uint64_t h, std::uint64_t v) noexcept {
  std::uint64_t s = h ^ (v + 0x632BE59BD9B4E019ULL + (h << 6) + (h >> 2));
  return splitmix64(s);
}

}  // namespace detail

/// Counter-based random stream. The state is a pure function of
/// (seed, stream id, draw index), so any client can regenerate its draws
/// independently of evaluation order or thread assignment.
///
/// Satisfies UniformRandomBitGenerator.
class KeyedStream {
 public:
  using result_type = std::uint64_t;

  KeyedStream(std::uint64_t seed, std::uint64_t stream, DrawIndex idx) noexcept {
    std::uint64_t k = detail::mix(0x243F6A8885A308D3ULL, seed);
    k = detail::mix(k, stream);
    k = detail::mix(k, idx.t);
    k = detail::mix(k, idx.e);
    k = detail::mix(k, idx.h);
    state_ = k;
  }

  /// Stream keyed by (seed, stream) only, for one-shot construction work.
  KeyedStream(std::uint64_t seed, std::uint64_t stream) noexcept
      : KeyedStream(seed, stream, DrawIndex{~0ULL, ~0ULL, ~0ULL}) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return detail::splitmix64(state_); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n) by Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t n) noexcept {
    unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>((*this)()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Standard normal via the Marsaglia polar method.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mtgc
