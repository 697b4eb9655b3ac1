#include "relurec/train.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

#include "relurec/gauss_expect.hpp"
#include "relurec/geometry.hpp"

namespace relurec {

namespace {

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

double max_balance_violation(const Student& s) {
  double worst = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < s.width(); ++i) {
    const double nw = s.w.row(i).norm();
    worst = std::max(worst, (std::abs(s.a[i]) - nw) / std::max(1.0, nw));
  }
  return worst;
}

class WallClock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace

void Schedule::validate() const {
  if (eta0 <= 0 || lambda0 <= 0 || eps0 <= 0 || eta2 <= 0 || t2_max <= 0 || stage2_tol <= 0 ||
      per_epoch_cap <= 0 || stop_factor <= 0) {
    throw ConfigError("Schedule: all parameters must be positive");
  }
  if (epochs < 0) throw ConfigError("Schedule: epochs must be >= 0");
  if (stage2_lambda() <= 0 || stage3_lambda0() <= 0) {
    throw ConfigError("Schedule: weight-decay values must be positive");
  }
}

void trace_to_csv(const TrainTrace& trace, std::ostream& os) {
  os << "stage,epoch,iter,lambda,reg_loss,square_loss,gap_surrogate,grad_fro_norm,"
        "max_balance_violation,wall_time_s\n";
  char buf[360];
  for (const TraceRow& r : trace.rows) {
    std::snprintf(buf, sizeof(buf),
                  "%d,%d,%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.6f\n", r.stage, r.epoch,
                  r.iter, r.lambda, r.reg_loss, r.square_loss, r.gap_surrogate, r.grad_fro_norm,
                  r.max_balance_violation, r.wall_time_s);
    os << buf;
  }
}

Student stage1_one_step(const Student& student, const Teacher& teacher, double eta0,
                        double lambda0) {
  const Gradient g = population_gradient(student, teacher, lambda0);
  Student out = student;
  out.a -= eta0 * g.g_a;
  out.w -= eta0 * g.g_w;
  out.alpha -= eta0 * g.g_alpha;
  out.beta -= eta0 * g.g_beta;
  // Symmetric initialization plus preprocessing keep the linear head at zero.
  if (std::abs(out.alpha) > 1e-12 || out.beta.lpNorm<Eigen::Infinity>() > 1e-12) {
    throw NumericError("stage1_one_step: linear head moved away from zero");
  }
  return out;
}

Student stage2_fit(const Student& student, const Teacher& teacher, double lambda, double eta2,
                   int t2_max, double tol, TrainTrace* trace) {
  if (lambda < 0) throw ConfigError("stage2_fit: lambda must be >= 0");
  const Index m = student.width();
  const Index ms = teacher.m_star();
  const WallClock clock;

  // With (alpha, beta) at their inner optimum the objective in a is the
  // quadratic a^T Q a - 2 c^T a + const plus the weighted l1 penalty.
  const Vector n = student.w.rowwise().norm();
  Matrix q = Matrix::Zero(m, m);
  Vector c = Vector::Zero(m);
  double const0 = 0.0;
  for (Index i = 0; i < m; ++i) {
    if (n[i] < kNormFloor) continue;
    const Vector wi = student.w.row(i).transpose() / n[i];
    for (Index k = i; k < m; ++k) {
      if (n[k] < kNormFloor) continue;
      const double v = n[i] * n[k] * sigma_ge2_kernel(wi, student.w.row(k).transpose() / n[k]);
      q(i, k) = v;
      q(k, i) = v;
    }
    for (Index j = 0; j < ms; ++j) {
      c[i] += n[i] * teacher.a_star[j] * sigma_ge2_kernel(wi, teacher.w_star.row(j).transpose());
    }
  }
  for (Index j = 0; j < ms; ++j) {
    for (Index l = 0; l < ms; ++l) {
      const0 += teacher.a_star[j] * teacher.a_star[l] *
                sigma_ge2_kernel(teacher.w_star.row(j).transpose(),
                                 teacher.w_star.row(l).transpose());
    }
  }

  Vector a = student.a;
  auto objective = [&](const Vector& v) {
    return v.dot(q * v) - 2.0 * c.dot(v) + const0 + lambda * n.cwiseProduct(v.cwiseAbs()).sum();
  };
  double f = objective(a);
  double step = eta2;

  for (int t = 0; t < t2_max; ++t) {
    if (trace) {
      TraceRow row;
      row.stage = 2;
      row.iter = t;
      row.lambda = lambda;
      row.reg_loss = f;
      row.square_loss = f - lambda * n.cwiseProduct(a.cwiseAbs()).sum();
      row.gap_surrogate = f - lambda * teacher.a_l1();
      row.grad_fro_norm = (2.0 * (q * a - c)).norm();
      row.wall_time_s = clock.seconds();
      trace->rows.push_back(row);
    }
    const Vector grad = 2.0 * (q * a - c);
    double f_new = f;
    Vector a_new = a;
    while (true) {
      for (Index i = 0; i < m; ++i) {
        a_new[i] = soft_threshold(a[i] - step * grad[i], step * lambda * n[i]);
      }
      f_new = objective(a_new);
      if (f_new <= f + 1e-15 * (1.0 + std::abs(f))) break;
      step *= 0.5;
      if (step < 1e-12) throw StepSizeCollapse("stage2_fit: backtracking step below 1e-12");
    }
    const double decrease = f - f_new;
    a = a_new;
    f = f_new;
    if (decrease < tol) break;
  }

  Student out = student;
  out.a = a;
  out.alpha = alpha_hat(out);
  out.beta = beta_hat(out);
  return out;
}

Student balance_norms(const Student& student) {
  Student out = student;
  for (Index i = 0; i < student.width(); ++i) {
    const double nw = student.w.row(i).norm();
    const double mass = std::abs(student.a[i]) * nw;
    if (mass < kNormFloor * kNormFloor || nw < kNormFloor) {
      out.a[i] = 0.0;
      out.w.row(i).setZero();
      continue;
    }
    const double root = std::sqrt(mass);
    out.a[i] = (student.a[i] >= 0 ? 1.0 : -1.0) * root;
    out.w.row(i) = student.w.row(i) * (root / nw);
  }
  out.alpha = alpha_hat(out);
  out.beta = beta_hat(out);
  return out;
}

Student stage3_epoch(const Student& student, const Teacher& teacher, double lambda_k, double eta3,
                     int cap, double c_stop, int epoch_index, int log_every, TrainTrace& trace) {
  if (lambda_k <= 0 || eta3 <= 0) throw ConfigError("stage3_epoch: lambda_k, eta3 must be > 0");
  const WallClock clock;
  const double a_l1 = teacher.a_l1();
  const double threshold = c_stop * lambda_k * lambda_k;
  Student s = student;
  double start_reg = -1.0;

  for (long t = 0; t < cap; ++t) {
    auto [square, grad] = loss_and_gradient(s, teacher, lambda_k);
    const double reg = square + 0.5 * lambda_k * (s.a.squaredNorm() + s.w.squaredNorm());
    const double gap = reg - lambda_k * a_l1;
    if (start_reg < 0) start_reg = reg;
    const bool stop = std::max(gap, 0.0) <= threshold;

    if (stop || t % log_every == 0) {
      TraceRow row;
      row.stage = 3;
      row.epoch = epoch_index;
      row.iter = t;
      row.lambda = lambda_k;
      row.reg_loss = reg;
      row.square_loss = square;
      row.gap_surrogate = gap;
      row.grad_fro_norm = std::sqrt(grad.squared_frobenius());
      row.max_balance_violation = max_balance_violation(s);
      row.wall_time_s = clock.seconds();
      trace.rows.push_back(row);
    }
    if (stop) break;
    if (reg > 10.0 * start_reg) {
      throw DivergenceError("stage3_epoch: regularized loss exceeded 10x its epoch start");
    }
    s.a -= eta3 * grad.g_a;
    s.w -= eta3 * grad.g_w;
    s.alpha -= eta3 * grad.g_alpha;
    s.beta -= eta3 * grad.g_beta;
  }
  return s;
}

PipelineResult run_pipeline(const Teacher& teacher, const Schedule& schedule, Index m,
                            std::uint64_t seed, int log_every) {
  schedule.validate();
  PipelineResult result;
  Student s = init_student(m, teacher.dim(), seed);
  s = stage1_one_step(s, teacher, schedule.eta0, schedule.lambda0);
  {
    TraceRow row;
    row.stage = 1;
    row.lambda = schedule.lambda0;
    row.reg_loss = regularized_loss(s, teacher, schedule.lambda0);
    row.square_loss = population_square_loss(s, teacher);
    row.gap_surrogate = row.reg_loss - schedule.lambda0 * teacher.a_l1();
    row.grad_fro_norm =
        std::sqrt(population_gradient(s, teacher, schedule.lambda0).squared_frobenius());
    row.max_balance_violation = max_balance_violation(s);
    result.trace.rows.push_back(row);
  }

  const double lambda2 = schedule.stage2_lambda();
  s = stage2_fit(s, teacher, lambda2, schedule.eta2, schedule.t2_max, schedule.stage2_tol,
                 &result.trace);
  s = balance_norms(s);

  const double lambda30 = schedule.stage3_lambda0();
  const double eta3 = schedule.stage3_eta(teacher.dim());
  for (int k = 1; k <= schedule.epochs; ++k) {
    const double lambda_k = lambda30 / std::pow(2.0, k);
    s = stage3_epoch(s, teacher, lambda_k, eta3, schedule.per_epoch_cap, schedule.stop_factor, k,
                     log_every, result.trace);
    result.epoch_checkpoints.push_back(s);
    result.epoch_lambdas.push_back(lambda_k);
  }
  result.student = std::move(s);
  return result;
}

}  // namespace relurec
