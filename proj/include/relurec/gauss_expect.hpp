#pragma once

#include <cstdint>
#include <utility>

#include "relurec/rng.hpp"
#include "relurec/types.hpp"

namespace relurec {

// Closed-form Gaussian expectations for ReLU pairs and low-order moments,
// plus a deterministic Monte Carlo oracle for everything else.

// E[relu(w.x) relu(u.x)] = (|w||u|/2pi)(sin t + (pi - t) cos t), t = angle(w,u).
// Returns 0 if either norm is below the dead-neuron floor.
double relu_pair_kernel(const Vector& w, const Vector& u);

// Gradient in w of the kernel above: (|u| sin t / 2pi) wbar + ((pi - t)/2pi) u.
Vector relu_pair_kernel_grad(const Vector& w, const Vector& u);

// (E[relu(w.x)], E[relu(w.x) x]) = (|w|/sqrt(2pi), w/2).
std::pair<double, Vector> relu_low_order_moments(const Vector& w);

// E[sigma_{>=2}(wbar.x) sigma_{>=2}(ubar.x)] for unit inputs, where
// sigma_{>=2}(x) = relu(x) - 1/sqrt(2pi) - x/2. Equals the arc-cosine kernel
// minus its 0th and 1st Hermite terms: relu_pair_kernel - 1/2pi - cos(t)/4.
double sigma_ge2_kernel(const Vector& wbar, const Vector& ubar);

struct MCEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  long samples = 0;
};

// Deterministic Monte Carlo over x ~ N(0, I_d). The same (seed, n, d, f)
// always produces the identical estimate: samples are indexed by a counter
// stream and reduced in fixed blocks.
template <class F>
MCEstimate mc_expectation(F&& f, Index d, long n, std::uint64_t seed) {
  if (n < 2) throw DegenerateInput("mc_expectation: n must be >= 2");
  const std::uint64_t key = rng::mix64(seed + 0x71c9d1b5a7e4f2d3ULL);
  CompensatedSum sum, sumsq;
  Vector x(d);
  for (long i = 0; i < n; ++i) {
    const std::uint64_t base = static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(d);
    for (Index j = 0; j < d; ++j) x[j] = rng::normal(key, base + static_cast<std::uint64_t>(j));
    const double v = f(x);
    sum.add(v);
    sumsq.add(v * v);
  }
  MCEstimate est;
  est.samples = n;
  est.mean = sum.value() / static_cast<double>(n);
  const double var = std::max(0.0, sumsq.value() / static_cast<double>(n) - est.mean * est.mean);
  est.stderr_ = std::sqrt(var / static_cast<double>(n - 1));
  return est;
}

}  // namespace relurec
