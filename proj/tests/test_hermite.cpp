#include <cmath>
#include <sstream>

#include "doctest.h"
#include "relurec/hermite.hpp"

using namespace relurec;

namespace {
double relu(double x) { return x > 0.0 ? x : 0.0; }
}  // namespace

TEST_CASE("normalized Hermite basics") {
  CHECK(hermite_normalized(0, 3.7) == doctest::Approx(1.0));
  CHECK(hermite_normalized(1, 2.0) == doctest::Approx(2.0));
  CHECK(hermite_normalized(2, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
  // h_2 = (x^2 - 1)/sqrt(2)
  CHECK(hermite_normalized(2, 3.0) == doctest::Approx(8.0 / std::sqrt(2.0)));
}

TEST_CASE("quadrature is orthonormal on h_m h_n up to 20") {
  for (int m = 0; m <= 20; ++m) {
    for (int n = m; n <= 20; ++n) {
      const double v = quadrature_inner([m](double x) { return hermite_normalized(m, x); },
                                        [n](double x) { return hermite_normalized(n, x); }, 200);
      const double expect = m == n ? 1.0 : 0.0;
      CHECK(std::abs(v - expect) <= 1e-8);
    }
  }
}

TEST_CASE("quadrature spot values") {
  const double one = quadrature_inner([](double x) { return hermite_normalized(3, x); },
                                      [](double x) { return hermite_normalized(3, x); }, 50);
  CHECK(one == doctest::Approx(1.0).epsilon(1e-12));
  const double zero = quadrature_inner([](double x) { return hermite_normalized(2, x); },
                                       [](double x) { return hermite_normalized(5, x); }, 50);
  CHECK(std::abs(zero) <= 1e-12);
  const double relu0 = quadrature_inner(relu, [](double) { return 1.0; }, 200);
  CHECK(std::abs(relu0 - 1.0 / std::sqrt(2.0 * M_PI)) <= 1e-10);
}

TEST_CASE("relu table closed form") {
  const HermiteTable t = build_table(Activation::relu, 512);
  CHECK(t[0] == doctest::Approx(0.3989422804014327).epsilon(1e-14));
  CHECK(t[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(t[3] == 0.0);
  CHECK(t[5] == 0.0);
  // k = 2 from the closed form: 1/sqrt(4 pi); cross-checked against quadrature below.
  CHECK(t[2] == doctest::Approx(1.0 / std::sqrt(4.0 * M_PI)).epsilon(1e-14));
}

TEST_CASE("relu table matches quadrature to 1e-8 for k <= 30") {
  const HermiteTable t = build_table(Activation::relu, 64);
  for (int k = 0; k <= 30; ++k) {
    const double q = quadrature_inner(relu, [k](double x) { return hermite_normalized(k, x); }, 400);
    CHECK(std::abs(q - t[k]) <= 1e-8);
  }
}

TEST_CASE("abs table matches quadrature") {
  const HermiteTable t = build_table(Activation::abs, 64);
  CHECK(t[0] == doctest::Approx(std::sqrt(2.0 / M_PI)).epsilon(1e-14));
  for (int k = 1; k <= 21; k += 2) CHECK(t[k] == 0.0);
  for (int k = 0; k <= 30; ++k) {
    const double q = quadrature_inner([](double x) { return std::abs(x); },
                                      [k](double x) { return hermite_normalized(k, x); }, 400);
    CHECK(std::abs(q - t[k]) <= 1e-8);
  }
}

TEST_CASE("relu coefficients decay like k^{-5/4}") {
  const HermiteTable t = build_table(Activation::relu, 512);
  double prev = 0.0;
  for (int k = 10; k <= 300; k += 2) {
    const double scaled = t[k] * t[k] * std::pow(static_cast<double>(k), 2.5);
    CHECK(scaled >= 0.01);
    CHECK(scaled <= 100.0);
    if (k > 10) {
      CHECK(scaled / prev >= 0.5);
      CHECK(scaled / prev <= 2.0);
    }
    prev = scaled;
  }
}

TEST_CASE("large table is finite and alternates on even k") {
  const HermiteTable t = build_table(Activation::relu, 8192);
  CHECK(t.k_max == 8192);
  for (int k = 2; k <= 8192; k += 2) {
    CHECK(std::isfinite(t[k]));
    const double expect_sign = (k / 2 - 1) % 2 == 0 ? 1.0 : -1.0;
    CHECK(t[k] * expect_sign > 0.0);
  }
}

TEST_CASE("csv dump round-trips") {
  const HermiteTable t = build_table(Activation::relu, 16);
  std::ostringstream os;
  dump_table_csv(t, os);
  std::istringstream is(os.str());
  std::string header;
  std::getline(is, header);
  CHECK(header == "k,sigma_hat_k");
  int k;
  char comma;
  double v;
  int rows = 0;
  while (is >> k >> comma >> v) {
    CHECK(v == t[k]);
    ++rows;
  }
  CHECK(rows == 17);
}

TEST_CASE("build_table rejects bad input") {
  CHECK_THROWS_AS(build_table(Activation::relu, 1), DegenerateInput);
}
