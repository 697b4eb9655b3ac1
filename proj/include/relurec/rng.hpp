#pragma once

#include <cmath>
#include <cstdint>

#include "relurec/types.hpp"

namespace relurec {

// Counter-based deterministic generator (splitmix64 finalizer over a keyed
// counter). value(key, ctr) is a pure function, so any index range can be
// evaluated in any order and still reproduce the same stream bit-for-bit.
namespace rng {

inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

inline std::uint64_t value(std::uint64_t key, std::uint64_t counter) {
  return mix64(key ^ mix64(counter * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL));
}

// Uniform in the open interval (0,1); never returns an endpoint.
inline double uniform(std::uint64_t key, std::uint64_t counter) {
  return (static_cast<double>(value(key, counter) >> 11) + 0.5) * 0x1.0p-53;
}

// Standard normal via Box-Muller on two counter slots.
inline double normal(std::uint64_t key, std::uint64_t counter) {
  const double u1 = uniform(key, 2 * counter);
  const double u2 = uniform(key, 2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace rng

// Sequential convenience wrapper around the counter stream.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : key_(rng::mix64(seed + 0x6a09e667f3bcc909ULL)) {}

  double uniform() { return rng::uniform(key_, counter_++); }
  double normal() { return rng::normal(key_, counter_++); }

  Vector normal_vector(Index d) {
    Vector v(d);
    for (Index i = 0; i < d; ++i) v[i] = normal();
    return v;
  }

  // Uniform direction on the unit sphere in R^d.
  Vector unit_vector(Index d) {
    Vector v = normal_vector(d);
    double n = v.norm();
    while (n < kNormFloor) {  // astronomically unlikely; redraw
      v = normal_vector(d);
      n = v.norm();
    }
    return v / n;
  }

  // -1 or +1 with equal probability.
  double sign() { return uniform() < 0.5 ? -1.0 : 1.0; }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace relurec
