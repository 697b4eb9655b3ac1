#include "relurec/certificate.hpp"

#include <cmath>

#include "relurec/geometry.hpp"
#include "relurec/rng.hpp"

namespace relurec {

namespace {

struct SeriesSums {
  double s0 = 0.0;  // sum sigma_k^2 c^k
  double s1 = 0.0;  // sum sigma_k^2 k c^{k-1}
  double s2 = 0.0;  // sum sigma_k^2 k(k-1) c^{k-2}
  double s3 = 0.0;  // sum sigma_k^2 k(k-1)(k-2) c^{k-3}
  double z2 = 0.0;  // sum sigma_k^2
};

// cos powers run downward from c^{k_max}; iterating upward from c^ell keeps
// four aligned running powers. The first few k are special-cased so that
// c = 0 never meets a negative exponent.
SeriesSums kernel_series(double c, int ell, const HermiteTable& table, int k_max) {
  SeriesSums s;
  auto add_term = [&](int k, double p0, double p1, double p2, double p3) {
    const double sig2 = table[k] * table[k];
    if (sig2 == 0.0) return;
    s.z2 += sig2;
    s.s0 += sig2 * p0;
    s.s1 += sig2 * k * p1;
    s.s2 += sig2 * k * (k - 1.0) * p2;
    s.s3 += sig2 * k * (k - 1.0) * (k - 2.0) * p3;
  };
  const int k_start = std::max(ell, 4);
  for (int k = ell; k < k_start; ++k) {
    // k in {2, 3}: the s3 (and for k = 2 the s2) combinatorial factor kills
    // the negative-exponent power; pass dummy zero powers there.
    const double p0 = std::pow(c, k);
    const double p1 = std::pow(c, k - 1);
    const double p2 = k >= 2 ? std::pow(c, k - 2) : 0.0;
    const double p3 = k >= 3 ? std::pow(c, k - 3) : 0.0;
    add_term(k, p0, p1, p2, p3);
  }
  double p3 = std::pow(c, k_start - 3);
  double p2 = p3 * c;
  double p1 = p2 * c;
  double p0 = p1 * c;
  for (int k = k_start; k <= k_max; ++k) {
    add_term(k, p0, p1, p2, p3);
    p3 = p2;
    p2 = p1;
    p1 = p0;
    p0 *= c;
  }
  return s;
}

void require_unit(const Vector& v, const char* what) {
  if (std::abs(v.norm() - 1.0) > 1e-8) {
    throw DegenerateInput(std::string(what) + ": input must be a unit vector");
  }
}

int default_ell(const Teacher& teacher) {
  const double delta = teacher.delta_sep;
  const double raw =
      8.0 / (delta * delta) * std::log(8.0 * static_cast<double>(teacher.m_star()) / delta);
  int ell = static_cast<int>(std::ceil(raw));
  if (ell % 2 != 0) ++ell;  // even ell keeps eta even, matching unsigned angles
  return std::max(ell, 4);
}

// Orthonormal basis of S_* intersected with the tangent space of w (r-1
// columns); empty for r = 1.
Matrix subspace_tangent_basis(const Teacher& teacher, const Vector& w) {
  const Matrix& b = teacher.subspace_basis;
  const Index r = b.cols();
  if (r <= 1) return Matrix(w.size(), 0);
  Matrix m = b - w * (w.transpose() * b);
  Eigen::ColPivHouseholderQR<Matrix> qr(m);
  qr.setThreshold(1e-10);
  const Index rank = qr.rank();
  Matrix q = qr.householderQ() * Matrix::Identity(w.size(), rank);
  return q;
}

}  // namespace

Matrix KernelAtPair::k11_matrix() const {
  const Index d = wbar.size();
  const Matrix pw = Matrix::Identity(d, d) - wbar * wbar.transpose();
  const Matrix pu = Matrix::Identity(d, d) - ubar * ubar.transpose();
  return (s2 / z2) * (pw * ubar) * (wbar.transpose() * pu) + (s1 / z2) * pw * pu;
}

double KernelAtPair::k20_quadform(const Vector& z) const {
  const double uz = ubar.dot(z);
  return (s2 / z2) * uz * uz - (s1 / z2) * cos_theta * z.squaredNorm();
}

double KernelAtPair::k21_bound() const {
  // series with |cos| powers; sums of absolute terms bound each block
  const double sin_t = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
  return (std::abs(s3) * sin_t * sin_t * sin_t + 2.0 * std::abs(s2) * sin_t +
          std::abs(s1) * sin_t) /
         z2;
}

KernelAtPair kernel_and_derivatives(const Vector& wbar, const Vector& ubar, int ell,
                                    const HermiteTable& table, int k_max) {
  if (ell < 2) throw DegenerateInput("kernel_and_derivatives: ell must be >= 2");
  if (ell > k_max) throw DegenerateInput("kernel_and_derivatives: ell > k_max");
  if (k_max > table.k_max) throw DegenerateInput("kernel_and_derivatives: k_max beyond table");
  require_unit(wbar, "kernel_and_derivatives");
  require_unit(ubar, "kernel_and_derivatives");

  KernelAtPair out;
  out.wbar = wbar;
  out.ubar = ubar;
  const double c = std::min(1.0, std::max(-1.0, wbar.dot(ubar)));
  out.cos_theta = c;
  const SeriesSums s = kernel_series(c, ell, table, k_max);
  out.z2 = s.z2;
  out.s1 = s.s1;
  out.s2 = s.s2;
  out.s3 = s.s3;
  out.k = s.s0 / s.z2;
  out.k10 = (s.s1 / s.z2) * (ubar - c * wbar);  // (I - w w^T) u
  out.k01 = (s.s1 / s.z2) * (wbar - c * ubar);
  return out;
}

Certificate assemble_certificate(const Teacher& teacher, int ell, int k_max) {
  const Index ms = teacher.m_star();
  const Index d = teacher.dim();
  Certificate cert;
  cert.ell = ell > 0 ? ell : default_ell(teacher);
  if (cert.ell < 2) throw DegenerateInput("assemble_certificate: ell must be >= 2");
  cert.k_max = k_max > 0 ? k_max : 512 * cert.ell;
  if (cert.k_max < cert.ell) throw DegenerateInput("assemble_certificate: k_max < ell");
  cert.table = build_table(Activation::relu, cert.k_max);

  // Tangent bases inside S_*; the solution's alpha2 rows live there.
  std::vector<Matrix> tan(ms);
  Index dim = ms;
  std::vector<Index> offset(ms);
  for (Index i = 0; i < ms; ++i) {
    tan[i] = subspace_tangent_basis(teacher, teacher.w_star.row(i).transpose());
    offset[i] = dim;
    dim += tan[i].cols();
  }

  Matrix m = Matrix::Zero(dim, dim);
  for (Index i = 0; i < ms; ++i) {
    for (Index j = 0; j < ms; ++j) {
      const KernelAtPair kd = kernel_and_derivatives(
          teacher.w_star.row(j).transpose(), teacher.w_star.row(i).transpose(), cert.ell,
          cert.table, cert.k_max);
      // eta(w_i^*) row against alpha_1j and t_j
      m(i, j) = kd.k;
      if (tan[j].cols() > 0) {
        m.block(i, offset[j], 1, tan[j].cols()) = kd.k10.transpose() * tan[j];
      }
      // tangential grad eta(w_i^*) rows
      if (tan[i].cols() > 0) {
        m.block(offset[i], j, tan[i].cols(), 1) = tan[i].transpose() * kd.k01;
        if (tan[j].cols() > 0) {
          m.block(offset[i], offset[j], tan[i].cols(), tan[j].cols()) =
              tan[i].transpose() * kd.k11_matrix().transpose() * tan[j];
        }
      }
    }
  }

  Vector b = Vector::Zero(dim);
  for (Index i = 0; i < ms; ++i) b[i] = teacher.a_star[i] >= 0 ? 1.0 : -1.0;

  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smax = svd.singularValues()[0];
  const double cutoff = 1e-10 * smax;
  double smallest_kept = smax;
  Vector inv = Vector::Zero(dim);
  for (Index i = 0; i < dim; ++i) {
    const double sv = svd.singularValues()[i];
    if (sv > cutoff) {
      inv[i] = 1.0 / sv;
      smallest_kept = std::min(smallest_kept, sv);
    }
  }
  if (smallest_kept < 1e-8 * smax) {
    throw IllConditionedSystem("assemble_certificate: interpolation system is ill-conditioned");
  }
  const Vector x = svd.matrixV() * inv.asDiagonal() * (svd.matrixU().transpose() * b);

  cert.alpha1 = x.head(ms);
  cert.alpha2 = Matrix::Zero(ms, d);
  for (Index i = 0; i < ms; ++i) {
    if (tan[i].cols() > 0) {
      cert.alpha2.row(i) = (tan[i] * x.segment(offset[i], tan[i].cols())).transpose();
    }
  }
  cert.z2 = kernel_series(1.0, cert.ell, cert.table, cert.k_max).z2;
  cert.p_norm_est = std::sqrt(std::max(0.0, x.dot(m * x)) / cert.z2);
  return cert;
}

double eval_eta(const Certificate& cert, const Teacher& teacher, const Vector& w) {
  require_unit(w, "eval_eta");
  double eta = 0.0;
  for (Index j = 0; j < teacher.m_star(); ++j) {
    const KernelAtPair kd = kernel_and_derivatives(teacher.w_star.row(j).transpose(), w,
                                                   cert.ell, cert.table, cert.k_max);
    eta += cert.alpha1[j] * kd.k + cert.alpha2.row(j).dot(kd.k10);
  }
  return eta;
}

Vector eval_eta_grad_tangential(const Certificate& cert, const Teacher& teacher, const Vector& w) {
  require_unit(w, "eval_eta_grad_tangential");
  Vector grad = Vector::Zero(w.size());
  for (Index j = 0; j < teacher.m_star(); ++j) {
    const KernelAtPair kd = kernel_and_derivatives(teacher.w_star.row(j).transpose(), w,
                                                   cert.ell, cert.table, cert.k_max);
    grad += cert.alpha1[j] * kd.k01;
    grad += kd.k11_matrix().transpose() * cert.alpha2.row(j).transpose();
  }
  return grad - w * w.dot(grad);
}

VerifyReport verify_nondegeneracy(Certificate& cert, const Teacher& teacher, int grid_n,
                                  int ambient_samples, std::uint64_t seed) {
  if (grid_n < 90) throw DegenerateInput("verify_nondegeneracy: grid_n must be >= 90");
  const Index r = teacher.subspace_basis.cols();
  const Index d = teacher.dim();

  std::vector<Vector> points;
  if (r == 1) {
    points.push_back(teacher.subspace_basis.col(0));
    points.push_back(-teacher.subspace_basis.col(0));
  } else if (r == 2) {
    for (int i = 0; i < grid_n; ++i) {
      const double t = 2.0 * M_PI * i / grid_n;
      Vector c(2);
      c << std::cos(t), std::sin(t);
      points.push_back(teacher.subspace_basis * c);
    }
  } else if (r == 3) {
    // Fibonacci sphere at the same per-great-circle resolution
    const long n = static_cast<long>(std::ceil(grid_n * grid_n / M_PI));
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (long i = 0; i < n; ++i) {
      const double y = 1.0 - 2.0 * (i + 0.5) / n;
      const double rad = std::sqrt(std::max(0.0, 1.0 - y * y));
      const double phi = golden * i;
      Vector c(3);
      c << rad * std::cos(phi), y, rad * std::sin(phi);
      points.push_back(teacher.subspace_basis * c);
    }
  } else {
    CounterRng rng(rng::mix64(seed ^ 0x5bd1e995));
    const long n = static_cast<long>(std::ceil(grid_n * grid_n / M_PI));
    for (long i = 0; i < n; ++i) points.push_back(teacher.subspace_basis * rng.unit_vector(r));
  }
  CounterRng rng(seed);
  for (int i = 0; i < ambient_samples; ++i) points.push_back(rng.unit_vector(d));

  VerifyReport rep;
  rep.rho_fit = std::numeric_limits<double>::infinity();
  rep.grid_points = static_cast<long>(points.size());
  for (const Vector& w : points) {
    const double eta = eval_eta(cert, teacher, w);
    rep.max_abs_eta = std::max(rep.max_abs_eta, std::abs(eta));
    double delta = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < teacher.m_star(); ++i) {
      delta = std::min(delta, unsigned_angle(w, teacher.w_star.row(i).transpose()));
    }
    if (delta > 1e-3) {
      const double margin = (1.0 - std::abs(eta)) / (delta * delta);
      if (margin < rep.rho_fit) {
        rep.rho_fit = margin;
        rep.worst_w = w;
        rep.worst_margin = margin;
      }
    }
  }
  for (Index i = 0; i < teacher.m_star(); ++i) {
    const Vector wi = teacher.w_star.row(i).transpose();
    const double sign = teacher.a_star[i] >= 0 ? 1.0 : -1.0;
    rep.interp_error = std::max(rep.interp_error, std::abs(eval_eta(cert, teacher, wi) - sign));
    rep.grad_error = std::max(rep.grad_error, eval_eta_grad_tangential(cert, teacher, wi).norm());
  }
  cert.rho_fit = rep.rho_fit;
  if (!(rep.rho_fit > 0.0)) {
    throw CertificateDegenerate("verify_nondegeneracy: rho_fit <= 0");
  }
  return rep;
}

namespace {

// Shared by the statistic and its scale so truncation matches exactly.
HermiteTable statistic_table(int ell_t) { return build_table(Activation::relu, 2 * ell_t); }

}  // namespace

double test_statistic(const Student& student, const Teacher& teacher, Index i, int ell_t) {
  if (ell_t < 2) throw DegenerateInput("test_statistic: ell_t must be >= 2");
  const HermiteTable table = statistic_table(ell_t);
  const Vector wi = teacher.w_star.row(i).transpose();
  const double sign_ai = teacher.a_star[i] >= 0 ? 1.0 : -1.0;

  CompensatedSum stat;
  for (int k = ell_t; k < 2 * ell_t; ++k) {
    const double sig = table[k];
    if (sig == 0.0) continue;
    const double weight = sign_ai * (sig >= 0 ? 1.0 : -1.0) * sig;  // sign(a_i^*)|sigma_k|
    CompensatedSum inner;
    for (Index j = 0; j < teacher.m_star(); ++j) {
      inner.add(teacher.a_star[j] * std::pow(teacher.w_star.row(j).dot(wi), k));
    }
    for (Index j = 0; j < student.width(); ++j) {
      const double nj = student.w.row(j).norm();
      if (nj < kNormFloor) continue;
      inner.add(-student.a[j] * nj * std::pow(student.w.row(j).dot(wi) / nj, k));
    }
    stat.add(weight * inner.value());
  }
  return stat.value();
}

int test_statistic_default_order(const Teacher& teacher, Index i) {
  const double delta = teacher.delta_sep / 2.0;
  const double raw = 5.0 / (delta * delta) *
                     std::log(16.0 * teacher.a_l1() / std::abs(teacher.a_star[i]));
  return static_cast<int>(std::ceil(raw));
}

double test_statistic_scale(int ell_t) {
  const HermiteTable table = statistic_table(ell_t);
  double scale = 0.0;
  for (int k = ell_t; k < 2 * ell_t; ++k) scale += std::abs(table[k]);
  return scale;
}

}  // namespace relurec
