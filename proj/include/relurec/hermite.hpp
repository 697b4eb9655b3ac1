#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "relurec/types.hpp"

namespace relurec {

// Normalized probabilists' Hermite polynomials h_k = H_k / sqrt(k!) and the
// Hermite coefficients of ReLU and |x| under the standard Gaussian.

enum class Activation { relu, abs };

// h_k(x) via the three-term recurrence on normalized polynomials,
// h_k = (x h_{k-1} - sqrt(k-1) h_{k-2}) / sqrt(k).
double hermite_normalized(int k, double x);

struct HermiteTable {
  Activation activation = Activation::relu;
  Vector coeffs;  // coeffs[k] = sigma_hat_k, k = 0..k_max
  int k_max = 0;

  double operator[](int k) const { return coeffs[k]; }
};

// Closed-form coefficients, evaluated with log-factorials so large k never
// overflows. For ReLU: sigma_hat_0 = 1/sqrt(2 pi), sigma_hat_1 = 1/2, zero for
// odd k >= 3, and (-1)^{k/2-1} sqrt(1/2pi) (k-2)! / (sqrt(k!) 2^{k/2-1} (k/2-1)!)
// for even k >= 2. |x| differs by the factor 2 on even terms and has no k = 1 term.
HermiteTable build_table(Activation activation, int k_max = 8192);

// Writes "k,sigma_hat_k" rows (with header) for docs and tests.
void dump_table_csv(const HermiteTable& table, std::ostream& os);

// Gaussian quadrature for the N(0,1) weight, assembled from a half-range
// Gauss rule mirrored about 0. `nodes` counts points per half-line; the
// composite rule is exact for polynomials of degree <= 2*nodes-1 (odd parts
// cancel by symmetry, even parts are handled by the half-range rule), and it
// is also exact for integrands that are polynomial on each half-line
// separately, which is what makes it usable as an oracle for ReLU.
struct QuadratureRule {
  Vector points;
  Vector weights;  // sum to 1
};

const QuadratureRule& gauss_hermite_rule(int nodes);

// Gauss-Hermite estimate of E_{z~N(0,1)}[f(z) g(z)].
double quadrature_inner(const std::function<double(double)>& f,
                        const std::function<double(double)>& g, int nodes);

}  // namespace relurec
