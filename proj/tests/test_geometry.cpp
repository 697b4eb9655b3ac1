#include <cmath>

#include "doctest.h"
#include "relurec/gauss_expect.hpp"
#include "relurec/geometry.hpp"
#include "relurec/train.hpp"
#include "test_util.hpp"

using namespace relurec;
using namespace relurec::testutil;

namespace {

Teacher three_teacher(Index d, std::uint64_t seed) {
  Vector a(3);
  a << 1.0, -1.0, 2.0;
  return make_teacher(d, 2, 3, 0.4, a, seed);
}

Student balanced_copy(const Teacher& t) {
  Student s;
  s.a.resize(t.m_star());
  s.w.resize(t.m_star(), t.dim());
  for (Index i = 0; i < t.m_star(); ++i) {
    const double mass = std::sqrt(std::abs(t.a_star[i]));
    s.a[i] = (t.a_star[i] >= 0 ? 1.0 : -1.0) * mass;
    s.w.row(i) = mass * t.w_star.row(i);
  }
  s.alpha = alpha_hat(s);
  s.beta = beta_hat(s);
  return s;
}

}  // namespace

TEST_CASE("partition at exact teacher directions") {
  const Teacher t = three_teacher(10, 3);
  Student s;
  s.a = t.a_star;
  s.w = t.w_star;
  s.alpha = -t.alpha_star;
  s.beta = -t.beta_star;
  const PartitionReport rep = partition(s, t);
  CHECK(rep.delta.maxCoeff() <= 1e-12);
  CHECK(rep.weighted_far <= 1e-20);
  for (Index i = 0; i < 3; ++i) {
    CHECK(rep.assign[i] == i);
    CHECK(rep.avg_dist[i] <= 1e-12);
    CHECK(rep.mass[i] == doctest::Approx(t.a_star[i]).epsilon(1e-12));
    CHECK(rep.min_close[i] <= 1e-12);
  }
}

TEST_CASE("weighted_far arithmetic for a single off-axis neuron") {
  const Teacher t = make_teacher(6, 1, 1, 0.3, Vector::Ones(1), 5);
  // student at angle pi/4 from the teacher with mass 2
  Vector ortho = Vector::Zero(6);
  {
    CounterRng rng(8);
    Vector g = rng.normal_vector(6);
    ortho = (g - g.dot(t.w_star.row(0).transpose()) * t.w_star.row(0).transpose()).normalized();
  }
  Student s;
  s.a = Vector::Ones(1);
  s.w.resize(1, 6);
  s.w.row(0) = (2.0 * (t.w_star.row(0).transpose() * std::cos(M_PI / 4) +
                       ortho * std::sin(M_PI / 4)))
                   .transpose();
  s.alpha = 0.0;
  s.beta = Vector::Zero(6);
  const PartitionReport rep = partition(s, t);
  CHECK(rep.delta[0] == doctest::Approx(M_PI / 4).epsilon(1e-12));
  CHECK(rep.weighted_far == doctest::Approx(2.0 * (M_PI / 4) * (M_PI / 4)).epsilon(1e-12));
}

TEST_CASE("zero-norm neurons carry no mass and are excluded from min_close") {
  const Teacher t = three_teacher(8, 11);
  Student s = random_student(4, 8, 50, 0.5);
  s.w.row(2).setZero();
  const PartitionReport rep = partition(s, t);
  CHECK(rep.assign[2] == 0);
  CHECK(rep.delta[2] == 0.0);
  // teacher 0's min_close must not be polluted by the dead neuron
  bool live_in_zero = false;
  for (Index j = 0; j < 4; ++j) {
    if (j != 2 && rep.assign[j] == 0) live_in_zero = true;
  }
  if (!live_in_zero) CHECK(std::isinf(rep.min_close[0]));
}

TEST_CASE("canonicalize_signs keeps f pointwise and fixes orientations") {
  const Teacher t = three_teacher(12, 17);
  Student s = random_student(10, 12, 60, 0.7);
  const Student c = canonicalize_signs(s, t);
  const PartitionReport rep = partition(c, t);
  for (Index j = 0; j < c.width(); ++j) {
    CHECK(c.w.row(j).dot(t.w_star.row(rep.assign[j])) >= 0.0);
  }
  CounterRng rng(61);
  for (int k = 0; k < 100; ++k) {
    const Vector x = rng.normal_vector(12);
    CHECK(std::abs(forward(c, t, x).first - forward(s, t, x).first) <= 1e-10);
  }
  CHECK(std::abs(population_square_loss(c, t) - population_square_loss(s, t)) <= 1e-10);

  // already aligned: identity
  const Student c2 = canonicalize_signs(c, t);
  CHECK((c2.w - c.w).norm() == 0.0);
  CHECK((c2.beta - c.beta).norm() == 0.0);
}

TEST_CASE("gap surrogate values") {
  const Teacher t = three_teacher(10, 23);
  const Student bal = balanced_copy(t);
  CHECK(std::abs(gap_surrogate(bal, t, 1e-3)) <= 1e-10);

  const Teacher single = make_teacher(6, 1, 1, 0.3, Vector::Ones(1), 2);
  Student empty;
  empty.a = Vector(0);
  empty.w = Matrix(0, 6);
  empty.alpha = 0.0;
  empty.beta = Vector::Zero(6);
  const double high = 0.5 - 1.0 / (2.0 * M_PI) - 0.25;
  CHECK(gap_surrogate(empty, single, 0.1) == doctest::Approx(high - 0.1).epsilon(1e-10));
  CHECK(gap_surrogate(empty, single, 0.0) ==
        doctest::Approx(population_square_loss(empty, single)).epsilon(1e-12));
}

TEST_CASE("quadratic sign expectation matches MC") {
  CounterRng rng(71);
  const Index d = 5;
  for (int trial = 0; trial < 5; ++trial) {
    const Vector u = rng.normal_vector(d);
    const Vector v = rng.normal_vector(d);
    const Vector a = rng.unit_vector(d);
    const Vector b = rng.unit_vector(d);
    const double closed = quadratic_sign_expectation(u, v, a, b);
    const auto mc = mc_expectation(
        [&](const Vector& x) {
          const double sa = a.dot(x) > 0 ? 1.0 : -1.0;
          const double sb = b.dot(x) > 0 ? 1.0 : -1.0;
          return u.dot(x) * v.dot(x) * sa * sb;
        },
        d, 400000, 900 + trial);
    CHECK(std::abs(closed - mc.mean) <= 5.0 * mc.stderr_);
  }
  // degenerate angles
  const Vector a = rng.unit_vector(d);
  const Vector u = rng.normal_vector(d), v = rng.normal_vector(d);
  CHECK(quadratic_sign_expectation(u, v, a, a) == doctest::Approx(u.dot(v)).epsilon(1e-12));
  CHECK(quadratic_sign_expectation(u, v, a, Vector(-a)) ==
        doctest::Approx(-u.dot(v)).epsilon(1e-12));
}

TEST_CASE("residual decomposition: exact student gives all zeros") {
  const Teacher t = three_teacher(10, 31);
  Student s;
  s.a = t.a_star;
  s.w = t.w_star;
  s.alpha = -t.alpha_star;
  s.beta = -t.beta_star;
  const ResidualNorms rn = residual_norms(s, t, {100000, 7});
  CHECK(rn.r <= 1e-7);
  CHECK(rn.r1 <= 1e-7);
  CHECK(rn.r3 <= 1e-7);
  CHECK(rn.r2 * rn.r2 <= 5.0 * rn.r2_stderr + 1e-20);
}

TEST_CASE("residual decomposition identity on random instances") {
  const Teacher t = three_teacher(8, 37);
  for (int trial = 0; trial < 3; ++trial) {
    Student s = random_student(6, 8, 700 + trial, 0.6);
    s = canonicalize_signs(s, t);
    const ResidualEval eval(s, t);
    // |R|^2 closed form vs MC
    const auto mc_r = mc_expectation(
        [&](const Vector& x) {
          const double v = eval.r(x);
          return v * v;
        },
        8, 200000, 1000 + trial);
    CHECK(std::abs(population_square_loss(s, t) - mc_r.mean) <= 5.0 * mc_r.stderr_);
    // |R1+R2+R3|^2 via MC vs closed |R|^2
    const auto mc_sum = mc_expectation(
        [&](const Vector& x) {
          const double v = eval.r1(x) + eval.r2(x) + eval.r3(x);
          return v * v;
        },
        8, 200000, 1100 + trial);
    CHECK(std::abs(population_square_loss(s, t) - mc_sum.mean) <= 5.0 * mc_sum.stderr_);
    // pointwise identity: R - R1 - R2 - R3 is zero up to rounding
    CounterRng rng(1200 + trial);
    for (int k = 0; k < 200; ++k) {
      const Vector x = rng.normal_vector(8);
      const double diff = eval.r(x) - eval.r1(x) - eval.r2(x) - eval.r3(x);
      CHECK(std::abs(diff) <= 1e-10);
    }
    // closed-form R1 norm vs MC
    const auto mc_r1 = mc_expectation(
        [&](const Vector& x) {
          const double v = eval.r1(x);
          return v * v;
        },
        8, 200000, 1300 + trial);
    const ResidualNorms rn = residual_norms(s, t, {100000, 5});
    CHECK(std::abs(rn.r1 * rn.r1 - mc_r1.mean) <= 5.0 * mc_r1.stderr_);
  }
}

TEST_CASE("perturbed second layer keeps R2 identically zero") {
  const Teacher t = three_teacher(9, 41);
  Student s;
  s.a = t.a_star.array() + 0.1;
  s.w = t.w_star;
  s.alpha = -t.alpha_star;
  s.beta = -t.beta_star;
  const ResidualEval eval(s, t);
  CounterRng rng(77);
  for (int k = 0; k < 100; ++k) {
    const Vector x = rng.normal_vector(9);
    CHECK(eval.r2(x) == 0.0);
  }
  const ResidualNorms rn = residual_norms(s, t, {50000, 3});
  CHECK(rn.r2 == 0.0);
  CHECK(rn.r1 > 1e-3);
  CHECK(rn.r3 > 1e-3);
}

TEST_CASE("descent audit basics") {
  const Teacher t = three_teacher(10, 47);
  const Student bal = balanced_copy(t);
  const AuditReport rep = descent_audit(bal, t, 0.1, 0.2, 0.5);
  CHECK(rep.balance_term <= 1e-12);
  CHECK(rep.cancellation_mass.maxCoeff() <= 0.0);
  CHECK(rep.skipped_teachers.empty());
  // q sums the teacher masses: sum_j a_j q_ij = a_i^*
  for (Index i = 0; i < 3; ++i) {
    double sum = 0.0;
    for (Index j = 0; j < bal.width(); ++j) sum += bal.a[j] * rep.q(i, j);
    CHECK(sum == doctest::Approx(t.a_star[i]).epsilon(1e-12));
  }

  // far-away student: every positive neighborhood is empty
  Student far = random_student(4, 10, 81, 0.3);
  // push every neuron far from all teachers by projecting out the subspace
  for (Index j = 0; j < far.width(); ++j) {
    Vector w = far.w.row(j).transpose();
    w -= t.subspace_basis * (t.subspace_basis.transpose() * w);
    far.w.row(j) = w.transpose();
  }
  const AuditReport rep2 = descent_audit(far, t, 0.1, 0.05, 0.1);
  CHECK(rep2.skipped_teachers.size() == 3);
  CHECK_THROWS_AS(descent_audit(bal, t, 0.1, 0.5, 0.2), DegenerateInput);
}

TEST_CASE("rotation equivariance of the diagnostics") {
  const Teacher t = three_teacher(10, 53);
  Student s = random_student(8, 10, 91, 0.6);
  const double lam = 0.05;
  const double loss = population_square_loss(s, t);
  const double gap = gap_surrogate(s, t, lam);
  const PartitionReport rep = partition(s, t);
  const AuditReport audit = descent_audit(s, t, lam, 0.3, 0.6);
  const double ratio = grad_lower_bound_ratio(s, t, lam);

  CounterRng rng(97);
  Matrix g(10, 10);
  for (Index i = 0; i < 10; ++i) g.col(i) = rng.normal_vector(10);
  const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();

  Teacher tr = t;
  tr.w_star = t.w_star * q.transpose();
  tr.subspace_basis = q * t.subspace_basis;
  tr.beta_star = q * t.beta_star;
  Student sr = s;
  sr.w = s.w * q.transpose();
  sr.beta = q * s.beta;

  CHECK(population_square_loss(sr, tr) == doctest::Approx(loss).epsilon(1e-9));
  CHECK(gap_surrogate(sr, tr, lam) == doctest::Approx(gap).epsilon(1e-9));
  const PartitionReport rep_r = partition(sr, tr);
  CHECK((rep_r.delta - rep.delta).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(rep_r.weighted_far == doctest::Approx(rep.weighted_far).epsilon(1e-9));
  const AuditReport audit_r = descent_audit(sr, tr, lam, 0.3, 0.6);
  CHECK(audit_r.balance_term == doctest::Approx(audit.balance_term).epsilon(1e-9));
  CHECK(audit_r.inner_product == doctest::Approx(audit.inner_product).epsilon(1e-7));
  CHECK(grad_lower_bound_ratio(sr, tr, lam) == doctest::Approx(ratio).epsilon(1e-7));
}

TEST_CASE("descent audit is positive on in-band trajectory states") {
  // States with gap in [lambda^2, lambda^{9/5}] should correlate positively
  // with the composite direction; walk each epoch and audit in-band iterates.
  const Teacher t = make_teacher(10, 1, 1, 0.3, [] { Vector a(1); a << 2.0; return a; }(), 37);
  Schedule sch;
  sch.epochs = 6;
  const PipelineResult res = run_pipeline(t, sch, 16, 4, 1);
  const double eta = sch.stage3_eta(10);
  int audited = 0;
  for (size_t k = 0; k + 1 < res.epoch_checkpoints.size(); ++k) {
    const double lam = res.epoch_lambdas[k + 1];
    Student s = res.epoch_checkpoints[k];
    for (int step = 0; step < 400; ++step) {
      const double gap = gap_surrogate(s, t, lam);
      if (gap < lam * lam) break;
      if (gap <= std::pow(lam, 1.8)) {
        // the composite direction presumes canonical orientations
        const Student canon = canonicalize_signs(s, t);
        const double close = std::min(0.3, std::cbrt(gap));
        const AuditReport rep =
            descent_audit(canon, t, lam, close, std::min(M_PI / 2, 2.5 * close));
        CHECK(rep.inner_product > 0.0);
        ++audited;
        break;
      }
      const Gradient g = population_gradient(s, t, lam);
      s.a -= eta * g.g_a;
      s.w -= eta * g.g_w;
      s.alpha -= eta * g.g_alpha;
      s.beta -= eta * g.g_beta;
    }
  }
  CHECK(audited >= 2);
}
