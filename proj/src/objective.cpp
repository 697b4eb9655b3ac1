#include "relurec/objective.hpp"

#include <cmath>

#include "relurec/gauss_expect.hpp"

namespace relurec {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779;
constexpr double kInv2Pi = 0.15915494309189533577;

double clamp_cos(double c) { return std::min(1.0, std::max(-1.0, c)); }

// Arc-cosine kernel for unit directions at cos(theta) = c.
double unit_kernel(double c) {
  const double theta = std::acos(clamp_cos(c));
  return kInv2Pi * (std::sin(theta) + (M_PI - theta) * std::cos(theta));
}

}  // namespace

double alpha_hat(const Student& s) {
  CompensatedSum sum;
  for (Index i = 0; i < s.width(); ++i) sum.add(s.a[i] * s.w.row(i).norm());
  return -kInvSqrt2Pi * sum.value();
}

Vector beta_hat(const Student& s) { return -0.5 * s.w.transpose() * s.a; }

std::pair<double, Gradient> loss_and_gradient(const Student& student, const Teacher& teacher,
                                              double lambda) {
  const Index m = student.width();
  const Index ms = teacher.m_star();

  const Vector n = student.w.rowwise().norm();
  const double big_a = student.alpha + teacher.alpha_star;
  const Vector big_b = student.beta + teacher.beta_star;

  // Gram matrices; teacher rows are unit so G_st(i,j)/n_i is a cosine.
  const Matrix g_ss = student.w * student.w.transpose();
  const Matrix g_st = student.w * teacher.w_star.transpose();
  const Matrix g_tt = teacher.w_star * teacher.w_star.transpose();

  std::vector<char> alive(m);
  for (Index i = 0; i < m; ++i) alive[i] = n[i] >= kNormFloor;

  // E[R relu(w_i.x)] per student neuron and coefficient matrices for the
  // w-gradient: E[R relu'(w_i.x) x] = self_i w_i + sum_k C(i,k) w_k
  //                                 + sum_j D(i,j) w*_j + B/2.
  std::vector<CompensatedSum> e_r_sigma(m);
  Vector self = Vector::Zero(m);
  Matrix coef_s = Matrix::Zero(m, m);
  Matrix coef_t = Matrix::Zero(m, ms);

  for (Index i = 0; i < m; ++i) {
    if (!alive[i]) continue;
    CompensatedSum sin_acc;  // (1/2pi) sum of mass-weighted sines for the self coefficient
    for (Index k = 0; k < m; ++k) {
      if (!alive[k]) continue;
      const double c = clamp_cos(g_ss(i, k) / (n[i] * n[k]));
      const double theta = std::acos(c);
      const double sin_t = std::sin(theta);
      const double pi_m_t = M_PI - theta;
      e_r_sigma[i].add(student.a[k] * n[i] * n[k] * kInv2Pi * (sin_t + pi_m_t * c));
      coef_s(i, k) = student.a[k] * pi_m_t * kInv2Pi;
      sin_acc.add(student.a[k] * n[k] * sin_t);
    }
    for (Index j = 0; j < ms; ++j) {
      const double c = clamp_cos(g_st(i, j) / n[i]);
      const double theta = std::acos(c);
      const double sin_t = std::sin(theta);
      const double pi_m_t = M_PI - theta;
      e_r_sigma[i].add(-teacher.a_star[j] * n[i] * kInv2Pi * (sin_t + pi_m_t * c));
      coef_t(i, j) = -teacher.a_star[j] * pi_m_t * kInv2Pi;
      sin_acc.add(-teacher.a_star[j] * sin_t);
    }
    e_r_sigma[i].add(big_a * n[i] * kInvSqrt2Pi);
    e_r_sigma[i].add(0.5 * big_b.dot(student.w.row(i)));
    self[i] = (kInv2Pi * sin_acc.value() + big_a * kInvSqrt2Pi) / n[i];
  }

  // E[R relu(w*_j.x)] per teacher neuron (loss assembly only).
  Vector e_r_sigma_t(ms);
  for (Index j = 0; j < ms; ++j) {
    CompensatedSum acc;
    for (Index k = 0; k < m; ++k) {
      if (!alive[k]) continue;
      acc.add(student.a[k] * n[k] * unit_kernel(clamp_cos(g_st(k, j) / n[k])));
    }
    for (Index l = 0; l < ms; ++l) {
      acc.add(-teacher.a_star[l] * unit_kernel(clamp_cos(g_tt(j, l))));
    }
    acc.add(big_a * kInvSqrt2Pi);
    acc.add(0.5 * big_b.dot(teacher.w_star.row(j)));
    e_r_sigma_t[j] = acc.value();
  }

  // E[R] and E[R x].
  CompensatedSum mass;
  for (Index i = 0; i < m; ++i) mass.add(student.a[i] * n[i]);
  const double e_r = kInvSqrt2Pi * (mass.value() - teacher.a_star.sum()) + big_a;
  const Vector e_rx =
      0.5 * (student.w.transpose() * student.a - teacher.w_star.transpose() * teacher.a_star) +
      big_b;

  // Square loss from the same pieces:
  // E[R^2] = sum_i a_i E[R s_i] - sum_j a*_j E[R s*_j] + A E[R] + B.E[Rx].
  CompensatedSum loss;
  for (Index i = 0; i < m; ++i) loss.add(student.a[i] * e_r_sigma[i].value());
  for (Index j = 0; j < ms; ++j) loss.add(-teacher.a_star[j] * e_r_sigma_t[j]);
  loss.add(big_a * e_r);
  loss.add(big_b.dot(e_rx));
  const double square_loss = loss.value();

  Gradient grad;
  grad.g_a.resize(m);
  for (Index i = 0; i < m; ++i) grad.g_a[i] = 2.0 * e_r_sigma[i].value() + lambda * student.a[i];
  grad.g_w.noalias() = coef_s * student.w;
  grad.g_w.noalias() += coef_t * teacher.w_star;
  grad.g_w += self.asDiagonal() * student.w;
  for (Index i = 0; i < m; ++i) {
    if (alive[i]) grad.g_w.row(i) += 0.5 * big_b.transpose();
    grad.g_w.row(i) = 2.0 * student.a[i] * grad.g_w.row(i) + lambda * student.w.row(i);
  }
  grad.g_alpha = 2.0 * e_r;
  grad.g_beta = 2.0 * e_rx;
  return {square_loss, std::move(grad)};
}

double population_square_loss(const Student& student, const Teacher& teacher) {
  return loss_and_gradient(student, teacher, 0.0).first;
}

double regularized_loss(const Student& student, const Teacher& teacher, double lambda) {
  if (lambda < 0.0) throw DegenerateInput("regularized_loss: lambda must be >= 0");
  return population_square_loss(student, teacher) +
         0.5 * lambda * (student.a.squaredNorm() + student.w.squaredNorm());
}

Gradient population_gradient(const Student& student, const Teacher& teacher, double lambda) {
  if (lambda < 0.0) throw DegenerateInput("population_gradient: lambda must be >= 0");
  return loss_and_gradient(student, teacher, lambda).second;
}

LossDecomposition loss_decomposition(const Student& student, const Teacher& teacher) {
  const Index m = student.width();
  const Index ms = teacher.m_star();
  LossDecomposition out;

  const double da = student.alpha - alpha_hat(student);
  const Vector db = student.beta - beta_hat(student);
  out.lin_const = da * da;
  out.lin_vec = db.squaredNorm();

  // E[(f_{>=2} - f~_*)^2] over unit directions with masses t_i = a_i |w_i|.
  const Vector n = student.w.rowwise().norm();
  const Matrix g_ss = student.w * student.w.transpose();
  const Matrix g_st = student.w * teacher.w_star.transpose();
  const Matrix g_tt = teacher.w_star * teacher.w_star.transpose();
  auto s2 = [](double c) {
    return unit_kernel(c) - kInv2Pi - 0.25 * clamp_cos(c);
  };

  CompensatedSum high;
  for (Index i = 0; i < m; ++i) {
    if (n[i] < kNormFloor) continue;
    const double ti = student.a[i] * n[i];
    for (Index k = 0; k < m; ++k) {
      if (n[k] < kNormFloor) continue;
      high.add(ti * student.a[k] * n[k] * s2(g_ss(i, k) / (n[i] * n[k])));
    }
    for (Index j = 0; j < ms; ++j) {
      high.add(-2.0 * ti * teacher.a_star[j] * s2(g_st(i, j) / n[i]));
    }
  }
  for (Index j = 0; j < ms; ++j) {
    for (Index l = 0; l < ms; ++l) {
      high.add(teacher.a_star[j] * teacher.a_star[l] * s2(g_tt(j, l)));
    }
  }
  out.high = high.value();
  return out;
}

}  // namespace relurec
