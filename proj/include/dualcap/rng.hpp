#pragma once

// Counter-based random streams.
//
// Every draw is a pure function of (key, counter), where the key is derived
// from the run seed plus a list of tags (phase, iteration, group, ...). Copying
// a stream snapshots its position, so a batch can be regenerated bit-exactly
// by replaying a saved copy.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace dualcap {

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace detail {

/// sin(2 pi u) and cos(2 pi u). The argument is reduced by whole quarter turns,
/// which is exact, and the Taylor series through x^17 / x^18 on [-pi/4, pi/4]
/// is accurate to about 1e-16. Branch-free so batch loops vectorize.
/// Requires 0 <= u < 1, where truncation equals floor.
inline void turn_sincos(double u, double& s, double& c) noexcept {
  const auto quarter = static_cast<std::int64_t>(4.0 * u + 0.5);
  const auto k = static_cast<double>(quarter);
  const double x = 2.0 * std::numbers::pi * (u - 0.25 * k);
  const double x2 = x * x;
  double sp = 1.0 / 355687428096000.0;
  sp = sp * x2 - 1.0 / 1307674368000.0;
  sp = sp * x2 + 1.0 / 6227020800.0;
  sp = sp * x2 - 1.0 / 39916800.0;
  sp = sp * x2 + 1.0 / 362880.0;
  sp = sp * x2 - 1.0 / 5040.0;
  sp = sp * x2 + 1.0 / 120.0;
  sp = sp * x2 - 1.0 / 6.0;
  const double sn = x + x * x2 * sp;
  double cp = 1.0 / 6402373705728000.0;
  cp = cp * x2 - 1.0 / 20922789888000.0;
  cp = cp * x2 + 1.0 / 87178291200.0;
  cp = cp * x2 - 1.0 / 479001600.0;
  cp = cp * x2 + 1.0 / 3628800.0;
  cp = cp * x2 - 1.0 / 40320.0;
  cp = cp * x2 + 1.0 / 720.0;
  cp = cp * x2 - 1.0 / 24.0;
  cp = cp * x2 + 0.5;
  const double cs = 1.0 - x2 * cp;
  const std::int64_t q = quarter & 3;
  const double a = (q & 1) ? cs : sn;
  const double b = (q & 1) ? sn : cs;
  s = (q & 2) ? -a : a;
  c = ((q + 1) & 2) ? -b : b;  // negative in quadrants 1 and 2
}

inline void turn_sincos(const double* __restrict u, double* __restrict s, double* __restrict c,
                        std::size_t n) noexcept {
  for (std::size_t k = 0; k < n; ++k) turn_sincos(u[k], s[k], c[k]);
}

}  // namespace detail

class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t seed) noexcept
      : key_(splitmix64_mix(seed + 0x9E3779B97F4A7C15ULL)) {}

  CounterRng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) noexcept
      : CounterRng(seed) {
    for (auto t : tags) key_ = derive(key_, t);
  }

  /// Independent stream keyed by this stream's key and `tag`; position 0.
  [[nodiscard]] CounterRng substream(std::uint64_t tag) const noexcept {
    CounterRng child(*this);
    child.key_ = derive(key_, tag);
    child.counter_ = 0;
    child.has_spare_ = false;
    return child;
  }

  std::uint64_t next_u64() noexcept {
    return splitmix64_mix(key_ + (++counter_) * 0x9E3779B97F4A7C15ULL);
  }

  /// Uniform on the open interval (0, 1); 53 bits of resolution.
  double next_uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform on [lo, hi).
  double next_uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * next_uniform();
  }

  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double next_normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    double s = 0.0;
    double c = 0.0;
    detail::turn_sincos(u2, s, c);
    spare_ = radius * s;
    has_spare_ = true;
    return radius * c;
  }

  /// The same values as `n` successive next_normal() calls, computed in chunks
  /// so the trigonometric part vectorizes.
  void fill_normal(double* out, std::size_t n) noexcept {
    std::size_t i = 0;
    if (n > 0 && has_spare_) {
      out[i++] = spare_;
      has_spare_ = false;
    }
    constexpr std::size_t kChunk = 256;
    double radius[kChunk], angle[kChunk], s[kChunk], c[kChunk];
    while (i < n) {
      const std::size_t pairs = std::min(kChunk, (n - i + 1) / 2);
      for (std::size_t k = 0; k < pairs; ++k) {
        radius[k] = next_uniform();
        angle[k] = next_uniform();
      }
      for (std::size_t k = 0; k < pairs; ++k) radius[k] = std::sqrt(-2.0 * std::log(radius[k]));
      detail::turn_sincos(angle, s, c, pairs);
      for (std::size_t k = 0; k < pairs; ++k) {
        out[i++] = radius[k] * c[k];
        if (i == n) {  // odd tail: keep the second variate for the next call
          spare_ = radius[k] * s[k];
          has_spare_ = true;
          break;
        }
        out[i++] = radius[k] * s[k];
      }
    }
  }

  [[nodiscard]] std::uint64_t key() const noexcept { return key_; }
  [[nodiscard]] std::uint64_t position() const noexcept { return counter_; }

  friend bool operator==(const CounterRng&, const CounterRng&) = default;

 private:
  static constexpr std::uint64_t derive(std::uint64_t key, std::uint64_t tag) noexcept {
    return splitmix64_mix(key ^ splitmix64_mix(tag + 0xD1B54A32D192ED03ULL));
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dualcap
