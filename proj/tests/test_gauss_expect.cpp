#include <cmath>

#include "doctest.h"
#include "relurec/gauss_expect.hpp"
#include "relurec/hermite.hpp"
#include "relurec/rng.hpp"

using namespace relurec;

namespace {

Vector unit(Index d, Index i) {
  Vector v = Vector::Zero(d);
  v[i] = 1.0;
  return v;
}

// Central finite difference of the kernel in w.
Vector fd_kernel_grad(const Vector& w, const Vector& u, double h) {
  Vector g(w.size());
  for (Index i = 0; i < w.size(); ++i) {
    Vector wp = w, wm = w;
    wp[i] += h;
    wm[i] -= h;
    g[i] = (relu_pair_kernel(wp, u) - relu_pair_kernel(wm, u)) / (2.0 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("relu pair kernel closed form") {
  const Vector e0 = unit(6, 0), e1 = unit(6, 1);
  CHECK(relu_pair_kernel(e0, e0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(relu_pair_kernel(e0, Vector(-e0)) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(relu_pair_kernel(e0, e1) == doctest::Approx(1.0 / (2.0 * M_PI)).epsilon(1e-14));
  CHECK(relu_pair_kernel(Vector::Zero(6), e1) == 0.0);
}

TEST_CASE("relu pair kernel: symmetry, homogeneity, rotation invariance, range") {
  CounterRng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Index d = 5;
    const Vector w = 2.0 * rng.normal_vector(d);
    const Vector u = rng.normal_vector(d);
    const double k = relu_pair_kernel(w, u);
    CHECK(relu_pair_kernel(u, w) == doctest::Approx(k).epsilon(1e-13));
    const double s = 0.25 + 3.0 * rng.uniform();
    CHECK(relu_pair_kernel(Vector(s * w), u) == doctest::Approx(s * k).epsilon(1e-12));
    CHECK(k >= 0.0);
    CHECK(k <= 0.5 * w.norm() * u.norm() * (1.0 + 1e-14));
    // rotate both arguments by a random orthogonal map
    Matrix g(d, d);
    for (Index i = 0; i < d; ++i) g.col(i) = rng.normal_vector(d);
    const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
    CHECK(relu_pair_kernel(q * w, q * u) == doctest::Approx(k).epsilon(1e-12));
  }
}

TEST_CASE("relu pair kernel gradient: closed cases and finite differences") {
  const Vector e0 = unit(6, 0);
  CHECK((relu_pair_kernel_grad(e0, e0) - 0.5 * e0).norm() <= 1e-14);
  CHECK(relu_pair_kernel_grad(e0, Vector(-e0)).norm() <= 1e-14);
  CHECK_THROWS_AS(relu_pair_kernel_grad(Vector::Zero(6), e0), DegenerateInput);

  CounterRng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector w = rng.normal_vector(8);
    const Vector u = rng.normal_vector(8);
    const Vector g = relu_pair_kernel_grad(w, u);
    const Vector fd = fd_kernel_grad(w, u, 1e-6);
    CHECK((g - fd).norm() / std::max(fd.norm(), 1e-12) <= 1e-5);
  }
}

TEST_CASE("relu low-order moments") {
  const Vector e0 = unit(4, 0), e1 = unit(4, 1);
  auto [m0, l0] = relu_low_order_moments(e0);
  CHECK(m0 == doctest::Approx(0.3989422804014327).epsilon(1e-14));
  CHECK((l0 - 0.5 * e0).norm() == 0.0);
  auto [mz, lz] = relu_low_order_moments(Vector::Zero(4));
  CHECK(mz == 0.0);
  CHECK(lz.norm() == 0.0);
  auto [m2, l2] = relu_low_order_moments(Vector(2.0 * e1));
  CHECK(m2 == doctest::Approx(0.7978845608028654).epsilon(1e-14));
  CHECK((l2 - e1).norm() == 0.0);
}

TEST_CASE("sigma_ge2 kernel values") {
  const Vector e0 = unit(5, 0), e1 = unit(5, 1);
  const double at_zero = 0.5 - 1.0 / (2.0 * M_PI) - 0.25;
  CHECK(sigma_ge2_kernel(e0, e0) == doctest::Approx(at_zero).epsilon(1e-14));
  CHECK(std::abs(sigma_ge2_kernel(e0, e1)) <= 1e-14);
  CHECK(sigma_ge2_kernel(e0, Vector(-e0)) == doctest::Approx(at_zero).epsilon(1e-14));
  CHECK_THROWS_AS(sigma_ge2_kernel(Vector(2.0 * e0), e0), DegenerateInput);
}

TEST_CASE("sigma_ge2 kernel equals the truncated Hermite series") {
  const HermiteTable t = build_table(Activation::relu, 4096);
  const Index d = 3;
  for (int i = 0; i <= 180; ++i) {
    const double theta = M_PI * i / 180.0;
    Vector w = unit(d, 0);
    Vector u(d);
    u << std::cos(theta), std::sin(theta), 0.0;
    double series = 0.0;
    for (int k = t.k_max; k >= 2; --k) series += t[k] * t[k] * std::pow(std::cos(theta), k);
    CHECK(std::abs(sigma_ge2_kernel(w, u) - series) <= 1e-5);
  }
}

TEST_CASE("mc_expectation basics and determinism") {
  const auto one = mc_expectation([](const Vector&) { return 1.0; }, 3, 1000, 42);
  CHECK(one.mean == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(one.stderr_ == 0.0);

  const auto sq = mc_expectation([](const Vector& x) { const double s = std::max(x[0], 0.0); return s * s; },
                                 4, 1000000, 7);
  CHECK(std::abs(sq.mean - 0.5) <= 5.0 * sq.stderr_);

  const auto var = mc_expectation([](const Vector& x) { return x[0] * x[0]; }, 4, 1000000, 7);
  CHECK(std::abs(var.mean - 1.0) <= 5.0 * var.stderr_);

  const auto a = mc_expectation([](const Vector& x) { return x.squaredNorm(); }, 5, 5000, 9);
  const auto b = mc_expectation([](const Vector& x) { return x.squaredNorm(); }, 5, 5000, 9);
  const auto c = mc_expectation([](const Vector& x) { return x.squaredNorm(); }, 5, 5000, 10);
  CHECK(a.mean == b.mean);
  CHECK(a.stderr_ == b.stderr_);
  CHECK(a.mean != c.mean);
}

TEST_CASE("closed forms agree with the MC oracle") {
  CounterRng rng(99);
  const Index d = 8;
  for (int trial = 0; trial < 3; ++trial) {
    const Vector w = rng.normal_vector(d);
    const Vector u = rng.normal_vector(d);
    const auto kk = mc_expectation(
        [&](const Vector& x) { return std::max(w.dot(x), 0.0) * std::max(u.dot(x), 0.0); }, d,
        200000, 1234 + trial);
    CHECK(std::abs(kk.mean - relu_pair_kernel(w, u)) <= 5.0 * kk.stderr_);

    auto [mean, lin] = relu_low_order_moments(w);
    const auto mm = mc_expectation([&](const Vector& x) { return std::max(w.dot(x), 0.0); }, d,
                                   200000, 77 + trial);
    CHECK(std::abs(mm.mean - mean) <= 5.0 * mm.stderr_);
  }
}
