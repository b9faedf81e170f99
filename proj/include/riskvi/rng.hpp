#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace riskvi {

/// Stafford "mix13" finalizer; a bijection on 64-bit words.
inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

/// Counter-based generator keyed by (seed, stream).  Draw j of stream s is a
/// pure function of (seed, s, j), so streams can be consumed in any order --
/// or concurrently -- and still produce identical values.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(mix64(seed ^ mix64(stream * 0x9e3779b97f4a7c15ULL + 1))) {}

  std::uint64_t next() { return mix64(key_ ^ mix64(++counter_)); }

  /// Uniform draw in the open interval (0, 1).
  double uniform01() {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; pairs are cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Pairwise (cascade) summation over data[0..n): the reduction tree depends
/// only on n, so the result is bitwise reproducible for any thread count.
inline double pairwise_sum(const double* data, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += data[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(data, half) + pairwise_sum(data + half, n - half);
}

inline double pairwise_sum(const std::vector<double>& data) {
  return pairwise_sum(data.data(), data.size());
}

}  // namespace riskvi
