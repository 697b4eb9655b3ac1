#pragma once

#include <cstdint>
#include <vector>

#include "relurec/network.hpp"
#include "relurec/objective.hpp"
#include "relurec/types.hpp"

namespace relurec {

// Structure diagnostics: partition of student neurons by nearest teacher,
// average neurons, residual decomposition, gap surrogate and descent audits.
// Angles follow the unsigned convention arccos(|u.v|/|u||v|) in [0, pi/2].

double unsigned_angle(const Vector& u, const Vector& v);

struct PartitionReport {
  std::vector<Index> assign;  // student j -> teacher index
  Vector delta;               // angle delta_j to the assigned teacher
  Vector mass;                // per teacher: sum_{j in T_i} a_j |w_j|
  Matrix avg_neuron;          // m* x d rows v_i = sum_{j in T_i} a_j w_j
  Vector avg_dist;            // |v_i - a_i^* w_i^*|
  double weighted_far = 0.0;  // sum_j |a_j||w_j| delta_j^2
  Vector min_close;           // per teacher: min delta_j over live neurons in T_i (inf if none)
};

// Nearest-teacher assignment with lowest-index tie break. Neurons below the
// norm floor carry zero mass; they are assigned to teacher 0 with delta 0 and
// are excluded from min_close.
PartitionReport partition(const Student& student, const Teacher& teacher);

// Flips w_j (and compensates beta) for neurons whose nearest teacher has
// w_j . w_i^* < 0, leaving f pointwise unchanged.
Student canonicalize_signs(const Student& student, const Teacher& teacher);

// zeta_hat = L_lambda(theta) - lambda |a^*|_1. Approximates the optimality
// gap with bias bounded by lambda^2 |p|^2 in both directions.
double gap_surrogate(const Student& student, const Teacher& teacher, double lambda);

struct ResidualNorms {
  double r = 0.0;   // |R|, closed form (sqrt of population square loss)
  double r1 = 0.0;  // closed form via pairwise sign-kernel integrals
  double r2 = 0.0;  // Monte Carlo
  double r2_stderr = 0.0;  // stderr of the R2^2 estimate
  double r3 = 0.0;  // closed form
};

struct McSettings {
  long n = 200000;
  std::uint64_t seed = 0;
};

// L2(Gauss) norms of R and of the decomposition R = R1 + R2 + R3, with
// R1 built from effective teacher vectors a_i^* w_i^* so the identity is exact.
ResidualNorms residual_norms(const Student& student, const Teacher& teacher, const McSettings& mc);

// Pointwise evaluators for the decomposition (the MC identity checks use
// these directly).
struct ResidualEval {
  ResidualEval(const Student& student, const Teacher& teacher);
  double r(const Vector& x) const;
  double r1(const Vector& x) const;
  double r2(const Vector& x) const;
  double r3(const Vector& x) const;

  const Student& student;
  const Teacher& teacher;
  PartitionReport part;
  double r3_const = 0.0;
  Vector r3_lin;
};

// E[(u.x)(v.x) sign(a.x) sign(b.x)] for unit a, b: closed form, exact.
double quadratic_sign_expectation(const Vector& u, const Vector& v, const Vector& a,
                                  const Vector& b);

struct AuditReport {
  double balance_term = 0.0;        // lambda sum_i |a_i^2 - |w_i|^2|
  Vector cancellation_mass;         // per teacher: sum over T_{i,-}(delta_sign) of |a_j||w_j|
  Matrix q;                         // m* x m, q_ij on T_{i,+}(delta_close), else 0
  double q_sq_sum = 0.0;
  double inner_product = 0.0;       // <grad L_lambda, D> for the composite direction
  std::vector<Index> skipped_teachers;  // empty positive neighborhood
};

// Composite-direction audit: D = ((alpha+alpha_*), (beta+beta_*),
// {w_j - q_ij w_i^*}).
AuditReport descent_audit(const Student& student, const Teacher& teacher, double lambda,
                          double delta_close, double delta_sign);

// |grad L_lambda|_F^2 lambda^2 / max(zeta_hat, 1e-300)^4; meaningful only when
// zeta_hat is in [lambda^2, lambda^{9/5}].
double grad_lower_bound_ratio(const Student& student, const Teacher& teacher, double lambda);

}  // namespace relurec
