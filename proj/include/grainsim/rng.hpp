#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace grainsim {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Derive a child seed from a run seed and a component tag. All project
/// randomness flows from one run seed through these splits.
inline uint64_t seed_split(uint64_t seed, std::string_view tag) {
  return splitmix64(seed ^ fnv1a64(tag.data(), tag.size()));
}

// Deterministic generator with explicit uniform/normal transforms so
// sampled streams do not depend on the standard library implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(splitmix64(seed ^ 0x6a09e667f3bcc909ull)) {}

  uint64_t next() {
    state_ = splitmix64(state_);
    return state_;
  }

  /// Uniform in [0, 1).
  double uniform() { return (next() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  uint64_t uniform_int(uint64_t n) { return next() % n; }

  /// Standard normal via Box-Muller (cached second value).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * kPi_ * u2;
    spare_ = r * std::sin(th);
    have_spare_ = true;
    return r * std::cos(th);
  }

 private:
  static constexpr double kPi_ = 3.14159265358979323846;
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0;
};

}  // namespace grainsim
