#include "relurec/geometry.hpp"

#include <cmath>
#include <limits>

#include "relurec/gauss_expect.hpp"

namespace relurec {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double sgn(double t) { return t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0); }

}  // namespace

double unsigned_angle(const Vector& u, const Vector& v) {
  const double nu = u.norm(), nv = v.norm();
  if (nu < kNormFloor || nv < kNormFloor) return 0.0;
  return std::acos(std::min(1.0, std::abs(u.dot(v)) / (nu * nv)));
}

PartitionReport partition(const Student& student, const Teacher& teacher) {
  const Index m = student.width();
  const Index ms = teacher.m_star();
  if (ms == 0) throw DegenerateInput("partition: teacher is empty");

  PartitionReport rep;
  rep.assign.assign(m, 0);
  rep.delta = Vector::Zero(m);
  rep.mass = Vector::Zero(ms);
  rep.avg_neuron = Matrix::Zero(ms, student.dim());
  rep.min_close = Vector::Constant(ms, std::numeric_limits<double>::infinity());

  CompensatedSum far;
  for (Index j = 0; j < m; ++j) {
    const double nj = student.w.row(j).norm();
    if (nj < kNormFloor) {
      rep.assign[j] = 0;
      rep.delta[j] = 0.0;  // zero mass; excluded from min_close
      continue;
    }
    Index best = 0;
    double best_angle = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < ms; ++i) {
      const double ang = unsigned_angle(student.w.row(j), teacher.w_star.row(i));
      if (ang < best_angle) {
        best_angle = ang;
        best = i;
      }
    }
    rep.assign[j] = best;
    rep.delta[j] = best_angle;
    rep.mass[best] += student.a[j] * nj;
    rep.avg_neuron.row(best) += student.a[j] * student.w.row(j);
    far.add(std::abs(student.a[j]) * nj * best_angle * best_angle);
    rep.min_close[best] = std::min(rep.min_close[best], best_angle);
  }
  rep.weighted_far = far.value();
  rep.avg_dist.resize(ms);
  for (Index i = 0; i < ms; ++i) {
    rep.avg_dist[i] =
        (rep.avg_neuron.row(i) - teacher.a_star[i] * teacher.w_star.row(i)).norm();
  }
  return rep;
}

Student canonicalize_signs(const Student& student, const Teacher& teacher) {
  Student out = student;
  for (Index j = 0; j < student.width(); ++j) {
    const double nj = student.w.row(j).norm();
    if (nj < kNormFloor) continue;
    Index best = 0;
    double best_angle = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < teacher.m_star(); ++i) {
      const double ang = unsigned_angle(student.w.row(j), teacher.w_star.row(i));
      if (ang < best_angle) {
        best_angle = ang;
        best = i;
      }
    }
    if (student.w.row(j).dot(teacher.w_star.row(best)) < 0.0) {
      // relu(-t) = relu(t) - t, so flipping w_j adds a_j w_j . x to f;
      // absorb it into beta to keep f pointwise unchanged.
      out.beta += student.a[j] * student.w.row(j).transpose();
      out.w.row(j) = -student.w.row(j);
    }
  }
  return out;
}

double gap_surrogate(const Student& student, const Teacher& teacher, double lambda) {
  if (lambda < 0.0) throw DegenerateInput("gap_surrogate: lambda must be >= 0");
  return regularized_loss(student, teacher, lambda) - lambda * teacher.a_l1();
}

double quadratic_sign_expectation(const Vector& u, const Vector& v, const Vector& a,
                                  const Vector& b) {
  // E[x x^T sign(a.x) sign(b.x)] = (1 - 2t/pi) I on the complement of
  // span{a,b} plus a 2x2 correction; t is the signed angle between a and b.
  const double c = std::min(1.0, std::max(-1.0, a.dot(b) / (a.norm() * b.norm())));
  const double theta = std::acos(c);
  const double base = 1.0 - 2.0 * theta / M_PI;
  double out = base * u.dot(v);
  const Vector e1 = a / a.norm();
  Vector e2 = b / b.norm() - c * e1;
  const double n2 = e2.norm();
  if (n2 > 1e-12) {
    e2 /= n2;
    const double s = std::sin(theta);
    const double u1 = e1.dot(u), u2 = e2.dot(u);
    const double v1 = e1.dot(v), v2 = e2.dot(v);
    out += (2.0 * s / M_PI) * (c * (u1 * v1 - u2 * v2) + s * (u1 * v2 + u2 * v1));
  }
  return out;
}

ResidualEval::ResidualEval(const Student& s, const Teacher& t)
    : student(s), teacher(t), part(partition(s, t)) {
  CompensatedSum mass;
  for (Index j = 0; j < s.width(); ++j) mass.add(s.a[j] * s.w.row(j).norm());
  r3_const = kInvSqrt2Pi * (t.a_star.sum() - mass.value()) + (s.alpha - alpha_hat(s));
  r3_lin = s.beta - beta_hat(s);
}

double ResidualEval::r(const Vector& x) const { return forward(student, teacher, x).second; }

double ResidualEval::r1(const Vector& x) const {
  double out = 0.0;
  for (Index i = 0; i < teacher.m_star(); ++i) {
    const Vector u = part.avg_neuron.row(i).transpose() -
                     teacher.a_star[i] * teacher.w_star.row(i).transpose();
    out += 0.5 * u.dot(x) * sgn(teacher.w_star.row(i).dot(x));
  }
  return out;
}

double ResidualEval::r2(const Vector& x) const {
  double out = 0.0;
  for (Index j = 0; j < student.width(); ++j) {
    if (student.w.row(j).norm() < kNormFloor) continue;
    const double z = student.w.row(j).dot(x);
    const double zs = teacher.w_star.row(part.assign[j]).dot(x);
    out += 0.5 * student.a[j] * z * (sgn(z) - sgn(zs));
  }
  return out;
}

double ResidualEval::r3(const Vector& x) const { return r3_const + r3_lin.dot(x); }

ResidualNorms residual_norms(const Student& student, const Teacher& teacher,
                             const McSettings& mc) {
  const ResidualEval eval(student, teacher);
  ResidualNorms out;
  out.r = std::sqrt(std::max(0.0, population_square_loss(student, teacher)));

  CompensatedSum r1sq;
  for (Index i = 0; i < teacher.m_star(); ++i) {
    const Vector ui = eval.part.avg_neuron.row(i).transpose() -
                      teacher.a_star[i] * teacher.w_star.row(i).transpose();
    for (Index k = 0; k < teacher.m_star(); ++k) {
      const Vector uk = eval.part.avg_neuron.row(k).transpose() -
                        teacher.a_star[k] * teacher.w_star.row(k).transpose();
      r1sq.add(0.25 * quadratic_sign_expectation(ui, uk, teacher.w_star.row(i).transpose(),
                                                 teacher.w_star.row(k).transpose()));
    }
  }
  out.r1 = std::sqrt(std::max(0.0, r1sq.value()));

  const auto est = mc_expectation(
      [&](const Vector& x) {
        const double v = eval.r2(x);
        return v * v;
      },
      student.dim(), mc.n, mc.seed);
  out.r2 = std::sqrt(std::max(0.0, est.mean));
  out.r2_stderr = est.stderr_;

  out.r3 = std::sqrt(eval.r3_const * eval.r3_const + eval.r3_lin.squaredNorm());
  return out;
}

AuditReport descent_audit(const Student& student, const Teacher& teacher, double lambda,
                          double delta_close, double delta_sign) {
  if (!(0.0 < delta_close && delta_close < delta_sign && delta_sign <= M_PI / 2)) {
    throw DegenerateInput("descent_audit: need 0 < delta_close < delta_sign <= pi/2");
  }
  const Index m = student.width();
  const Index ms = teacher.m_star();
  const PartitionReport part = partition(student, teacher);

  AuditReport rep;
  rep.cancellation_mass = Vector::Zero(ms);
  rep.q = Matrix::Zero(ms, m);

  CompensatedSum bal;
  for (Index j = 0; j < m; ++j) {
    bal.add(std::abs(student.a[j] * student.a[j] - student.w.row(j).squaredNorm()));
  }
  rep.balance_term = lambda * bal.value();

  for (Index i = 0; i < ms; ++i) {
    const double sign_ai = sgn(teacher.a_star[i]);
    double denom = 0.0;
    for (Index j = 0; j < m; ++j) {
      if (part.assign[j] != i || student.w.row(j).norm() < kNormFloor) continue;
      if (part.delta[j] <= delta_sign && sgn(student.a[j]) != sign_ai) {
        rep.cancellation_mass[i] += std::abs(student.a[j]) * student.w.row(j).norm();
      }
      if (part.delta[j] <= delta_close && sgn(student.a[j]) == sign_ai) {
        denom += student.a[j] * student.a[j];
      }
    }
    if (denom <= 0.0) {
      rep.skipped_teachers.push_back(i);
      continue;
    }
    for (Index j = 0; j < m; ++j) {
      if (part.assign[j] != i || student.w.row(j).norm() < kNormFloor) continue;
      if (part.delta[j] <= delta_close && sgn(student.a[j]) == sign_ai) {
        rep.q(i, j) = student.a[j] * teacher.a_star[i] / denom;
      }
    }
  }
  rep.q_sq_sum = rep.q.squaredNorm();

  const Gradient grad = population_gradient(student, teacher, lambda);
  CompensatedSum inner;
  inner.add((student.alpha + teacher.alpha_star) * grad.g_alpha);
  inner.add((student.beta + teacher.beta_star).dot(grad.g_beta));
  for (Index j = 0; j < m; ++j) {
    const Index i = part.assign[j];
    inner.add(grad.g_w.row(j).dot(student.w.row(j) - rep.q(i, j) * teacher.w_star.row(i)));
  }
  rep.inner_product = inner.value();
  return rep;
}

double grad_lower_bound_ratio(const Student& student, const Teacher& teacher, double lambda) {
  if (lambda <= 0.0) throw DegenerateInput("grad_lower_bound_ratio: lambda must be > 0");
  const double zeta = std::max(gap_surrogate(student, teacher, lambda), 1e-300);
  const double grad_sq = population_gradient(student, teacher, lambda).squared_frobenius();
  return grad_sq * lambda * lambda / (zeta * zeta * zeta * zeta);
}

}  // namespace relurec
