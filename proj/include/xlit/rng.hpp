#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "xlit/errors.hpp"

namespace xlit {

/// splitmix64 step, used to derive independent seeds from a base seed.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix64(base ^ mix64(stream + 0x517cc1b727220a95ULL));
}

/// Deterministic random stream. All distributions are implemented here rather
/// than with std:: distribution objects, so the value sequence is a fixed
/// function of the seed independent of the standard library vendor.
class Rng {
 public:
  Rng() : engine_(0) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n). Rejection sampling, exact.
  std::uint64_t uniform_below(std::uint64_t n) {
    if (n == 0) throw ValidationError("Rng::uniform_below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  std::size_t index_below(std::size_t n) {
    return static_cast<std::size_t>(uniform_below(static_cast<std::uint64_t>(n)));
  }

  bool bernoulli(double p) { return next_double() < p; }

  /// Standard normal via Box-Muller. Stateless between calls (no cached spare),
  /// so the stream position is always two uniforms per draw.
  double normal() {
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  /// Normal truncated to [-2, 2] standard deviations, by resampling.
  double truncated_normal() {
    double z = normal();
    while (z < -2.0 || z > 2.0) z = normal();
    return z;
  }

  /// Fisher-Yates shuffle with this stream.
  template <class Vec>
  void shuffle(Vec& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = index_below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string save_state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void restore_state(const std::string& state) {
    std::istringstream is(state);
    is >> engine_;
    if (is.fail()) throw ValidationError("Rng::restore_state: malformed state string");
  }

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace xlit
