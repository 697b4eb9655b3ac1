#pragma once

#include <cstdint>

#include "relurec/hermite.hpp"
#include "relurec/network.hpp"
#include "relurec/types.hpp"

namespace relurec {

// Non-degenerate dual certificate for the sparse-spike problem: the kernel
// K_{>=ell}(w,u) = (1/Z^2) sum_{ell<=k<=k_max} sigma_hat_k^2 cos^k(theta) with
// its first and second derivative blocks, the interpolation system
// Upsilon (alpha1; alpha2) = (sign(a^*); 0), and grid verification of the
// quadratic-decay property |eta(w)| <= 1 - rho_eta angle(w, w_i^*)^2.

struct KernelAtPair {
  double k = 0.0;        // K(w, u)
  Vector k10;            // grad_1 K
  Vector k01;            // grad_2 K
  double s1 = 0.0, s2 = 0.0, s3 = 0.0;  // raw series sums (shared by the blocks below)
  double z2 = 0.0;
  double cos_theta = 0.0;
  Vector wbar, ubar;

  // grad_1 grad_2 K as an explicit d x d matrix.
  Matrix k11_matrix() const;
  // z^T (grad_1^2 K) z for a tangent z (z . w = 0).
  double k20_quadform(const Vector& z) const;
  // Upper bound on the operator norm of grad_1^2 grad_2 K at this pair.
  double k21_bound() const;
};

// Unit inputs required; ell >= 2, ell <= k_max <= table.k_max.
KernelAtPair kernel_and_derivatives(const Vector& wbar, const Vector& ubar, int ell,
                                    const HermiteTable& table, int k_max);

struct Certificate {
  Vector alpha1;   // m*
  Matrix alpha2;   // m* x d rows
  int ell = 0;
  int k_max = 0;
  double z2 = 0.0;          // truncated sum_{k>=ell} sigma_hat_k^2
  double p_norm_est = 0.0;  // L2 norm of the dual pre-image p for the solved coefficients
  double rho_fit = std::numeric_limits<double>::quiet_NaN();  // set by verify_nondegeneracy
  HermiteTable table;
};

// ell < 0 picks ceil(8 Delta^-2 ln(8 m*/Delta)) rounded up to even;
// k_max < 0 picks 512 ell (large enough that doubling it moves eta by less
// than 1e-4). Solves the interpolation system in subspace-reduced
// coordinates by SVD pseudo-inverse (cutoff 1e-10 sigma_max).
Certificate assemble_certificate(const Teacher& teacher, int ell = -1, int k_max = -1);

double eval_eta(const Certificate& cert, const Teacher& teacher, const Vector& w);

// Tangential gradient P_w grad eta(w).
Vector eval_eta_grad_tangential(const Certificate& cert, const Teacher& teacher, const Vector& w);

struct VerifyReport {
  double rho_fit = 0.0;       // min over grid of (1 - |eta|) / delta^2, delta > 1e-3
  Vector worst_w;
  double worst_margin = 0.0;  // the ratio at the arg min
  double max_abs_eta = 0.0;
  double interp_error = 0.0;  // max_i |eta(w_i^*) - sign(a_i^*)|
  double grad_error = 0.0;    // max_i |P grad eta(w_i^*)|
  long grid_points = 0;
};

// Grid: full circle in S_* for r = 2 (grid_n points), Fibonacci sphere for
// r = 3, quasi-uniform subspace samples otherwise, plus ambient_samples
// uniform directions in R^d. Sets cert.rho_fit.
VerifyReport verify_nondegeneracy(Certificate& cert, const Teacher& teacher, int grid_n,
                                  int ambient_samples, std::uint64_t seed);

// <-R, g> for the test function g = sum_{ell_t <= k < 2 ell_t}
// sign(a_i^*) sign(sigma_hat_k) h_k(w_i^*.x), evaluated in closed form.
double test_statistic(const Student& student, const Teacher& teacher, Index i, int ell_t);

// ceil((5/delta^2) ln(16 |a^*|_1 / |a_i^*|)) with delta = Delta/2.
int test_statistic_default_order(const Teacher& teacher, Index i);

// sum_{ell_t <= k < 2 ell_t} |sigma_hat_k|, the statistic's natural scale.
double test_statistic_scale(int ell_t);

}  // namespace relurec
