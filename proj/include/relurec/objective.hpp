#pragma once

#include "relurec/network.hpp"
#include "relurec/types.hpp"

namespace relurec {

// Exact population square loss E[(f(x;theta) - ytilde)^2], its gradient, and
// the split into linear-head and higher-order parts. Everything expands into
// pairwise arc-cosine kernel terms; no sampling. Pairwise sums run through
// compensated accumulation because late-stage losses sit eight orders of
// magnitude below the individual terms.

struct Gradient {
  Vector g_a;    // m
  Matrix g_w;    // m x d
  double g_alpha = 0.0;
  Vector g_beta;

  double squared_frobenius() const {
    return g_a.squaredNorm() + g_w.squaredNorm() + g_alpha * g_alpha + g_beta.squaredNorm();
  }
};

double population_square_loss(const Student& student, const Teacher& teacher);

// population_square_loss + (lambda/2)(|a|^2 + |W|_F^2).
double regularized_loss(const Student& student, const Teacher& teacher, double lambda);

// g_a_i = 2 E[R relu(w_i.x)] + lambda a_i,  g_w_i = 2 a_i E[R relu'(w_i.x) x] + lambda w_i,
// g_alpha = 2 E[R], g_beta = 2 E[R x]. Dead neurons take the zero data-subgradient.
Gradient population_gradient(const Student& student, const Teacher& teacher, double lambda);

// Both at once, sharing the pairwise kernel pass (the training loop calls this
// every iteration).
std::pair<double, Gradient> loss_and_gradient(const Student& student, const Teacher& teacher,
                                              double lambda);

struct LossDecomposition {
  double lin_const = 0.0;  // |alpha - alpha_hat|^2
  double lin_vec = 0.0;    // |beta - beta_hat|^2
  double high = 0.0;       // E[(f_{>=2} - f~_*)^2]

  double total() const { return lin_const + lin_vec + high; }
};

// alpha_hat = -(1/sqrt(2pi)) sum a_i |w_i|, beta_hat = -(1/2) sum a_i w_i.
double alpha_hat(const Student& s);
Vector beta_hat(const Student& s);

// The three parts sum to population_square_loss.
LossDecomposition loss_decomposition(const Student& student, const Teacher& teacher);

}  // namespace relurec
