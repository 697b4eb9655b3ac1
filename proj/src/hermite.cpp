#include "relurec/hermite.hpp"

#include <cmath>
#include <map>
#include <ostream>

namespace relurec {

double hermite_normalized(int k, double x) {
  if (k < 0) throw DegenerateInput("hermite_normalized: k must be >= 0");
  if (k == 0) return 1.0;
  if (k == 1) return x;
  double hm2 = 1.0;
  double hm1 = x;
  for (int j = 2; j <= k; ++j) {
    const double h = (x * hm1 - std::sqrt(static_cast<double>(j - 1)) * hm2) /
                     std::sqrt(static_cast<double>(j));
    hm2 = hm1;
    hm1 = h;
  }
  return hm1;
}

namespace {

// log of the even-k magnitude (k-2)! / (sqrt(k!) 2^{k/2-1} (k/2-1)!).
double log_even_ratio(int k) {
  return std::lgamma(k - 1.0) - 0.5 * std::lgamma(k + 1.0) -
         (k / 2 - 1) * std::log(2.0) - std::lgamma(k / 2.0);
}

}  // namespace

HermiteTable build_table(Activation activation, int k_max) {
  if (k_max < 2) throw DegenerateInput("build_table: k_max must be >= 2");
  HermiteTable table;
  table.activation = activation;
  table.k_max = k_max;
  table.coeffs = Vector::Zero(k_max + 1);

  const double front = activation == Activation::relu ? std::sqrt(0.5 / M_PI)
                                                      : std::sqrt(2.0 / M_PI);
  table.coeffs[0] = front;
  if (activation == Activation::relu) table.coeffs[1] = 0.5;
  for (int k = 2; k <= k_max; k += 2) {
    const double sign = (k / 2 - 1) % 2 == 0 ? 1.0 : -1.0;
    table.coeffs[k] = sign * front * std::exp(log_even_ratio(k));
  }
  return table;
}

void dump_table_csv(const HermiteTable& table, std::ostream& os) {
  os << "k,sigma_hat_k\n";
  char buf[64];
  for (int k = 0; k <= table.k_max; ++k) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g\n", k, table.coeffs[k]);
    os << buf;
  }
}

namespace {

// Gauss-Legendre rule on [-1,1] by Golub-Welsch.
void gauss_legendre(int n, Vector& x, Vector& w) {
  Matrix jacobi = Matrix::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(jacobi);
  x = es.eigenvalues();
  w.resize(n);
  for (int i = 0; i < n; ++i) {
    const double v = es.eigenvectors()(0, i);
    w[i] = 2.0 * v * v;
  }
}

// Lanczos reduction of a discrete measure {(x_j, w_j)} to n Jacobi recurrence
// coefficients (RKPW algorithm; Gragg & Harrod 1984). Stable for large n,
// unlike moment-based constructions.
void lanczos_jacobi(const Vector& x, const Vector& w, int n, Vector& alpha, Vector& beta) {
  const Index ncap = x.size();
  Vector p0 = x;
  Vector p1 = Vector::Zero(ncap);
  p1[0] = w[0];
  for (Index i = 0; i < ncap - 1; ++i) {
    double pn = w[i + 1];
    double gam = 1.0, sig = 0.0, t = 0.0;
    const double xlam = x[i + 1];
    for (Index k = 0; k <= i + 1; ++k) {
      const double rho = p1[k] + pn;
      const double tmp = gam * rho;
      const double tsig = sig;
      if (rho <= 0.0) {
        gam = 1.0;
        sig = 0.0;
      } else {
        gam = p1[k] / rho;
        sig = pn / rho;
      }
      const double tk = sig * (p0[k] - xlam) - gam * t;
      p0[k] -= tk - t;
      t = tk;
      pn = sig <= 0.0 ? tsig * p1[k] : (t * t) / sig;
      p1[k] = tmp;
    }
  }
  alpha = p0.head(n);
  beta = p1.head(n);
}

// n-node Gauss rule for the half-normal measure phi(z) dz on (0, inf)
// (total mass 1/2), built by discretized Stieltjes + Golub-Welsch.
void half_range_rule(int n, Vector& nodes, Vector& weights) {
  // Discretize with composite Gauss-Legendre; panel width resolves the
  // oscillation of degree-2n orthogonal polynomials, support covers the
  // mass of their squares.
  const double zmax = std::max(12.0, std::sqrt(4.0 * n + 2.0) + 6.0);
  const int panels = std::max(64, static_cast<int>(zmax / 0.05));
  const int per_panel = 20;
  Vector gx, gw;
  gauss_legendre(per_panel, gx, gw);

  const Index ncap = static_cast<Index>(panels) * per_panel;
  Vector dx(ncap), dw(ncap);
  const double h = zmax / panels;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * M_PI);
  Index idx = 0;
  for (int p = 0; p < panels; ++p) {
    const double a = p * h;
    for (int q = 0; q < per_panel; ++q, ++idx) {
      const double z = a + 0.5 * h * (gx[q] + 1.0);
      dx[idx] = z;
      dw[idx] = 0.5 * h * gw[q] * inv_sqrt_2pi * std::exp(-0.5 * z * z);
    }
  }

  Vector alpha, beta;
  lanczos_jacobi(dx, dw, n, alpha, beta);

  Matrix jacobi = Matrix::Zero(n, n);
  for (int k = 0; k < n; ++k) jacobi(k, k) = alpha[k];
  for (int k = 1; k < n; ++k) {
    const double b = std::sqrt(beta[k]);
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(jacobi, Eigen::EigenvaluesOnly);
  nodes = es.eigenvalues();

  // Weights from the Christoffel function 1/sum_k q_k(x)^2 with the
  // orthonormal recurrence. Eigenvector-based weights only carry absolute
  // accuracy ~eps^2, which corrupts the far-tail weights (true size down to
  // 1e-160) and ruins quadrature of high-degree polynomials; the Christoffel
  // form keeps tiny weights accurate in relative terms.
  weights.resize(n);
  for (int i = 0; i < n; ++i) {
    const double x = nodes[i];
    double qm1 = 0.0;
    double q = 1.0 / std::sqrt(beta[0]);
    double accum = q * q;
    for (int k = 0; k + 1 < n; ++k) {
      const double qn = ((x - alpha[k]) * q - (k > 0 ? std::sqrt(beta[k]) : 0.0) * qm1) /
                        std::sqrt(beta[k + 1]);
      qm1 = q;
      q = qn;
      accum += q * q;
      if (!std::isfinite(accum)) break;  // weight underflows; true value < 1e-308
    }
    weights[i] = std::isfinite(accum) ? 1.0 / accum : 0.0;
  }
}

}  // namespace

const QuadratureRule& gauss_hermite_rule(int nodes) {
  if (nodes < 2) throw DegenerateInput("gauss_hermite_rule: nodes must be >= 2");
  static std::map<int, QuadratureRule> cache;
  auto it = cache.find(nodes);
  if (it != cache.end()) return it->second;

  Vector hx, hw;
  half_range_rule(nodes, hx, hw);
  QuadratureRule rule;
  rule.points.resize(2 * nodes);
  rule.weights.resize(2 * nodes);
  for (int i = 0; i < nodes; ++i) {
    rule.points[i] = -hx[nodes - 1 - i];
    rule.weights[i] = hw[nodes - 1 - i];
    rule.points[nodes + i] = hx[i];
    rule.weights[nodes + i] = hw[i];
  }
  return cache.emplace(nodes, std::move(rule)).first->second;
}

double quadrature_inner(const std::function<double(double)>& f,
                        const std::function<double(double)>& g, int nodes) {
  const QuadratureRule& rule = gauss_hermite_rule(nodes);
  CompensatedSum sum;
  for (Index i = 0; i < rule.points.size(); ++i) {
    sum.add(rule.weights[i] * f(rule.points[i]) * g(rule.points[i]));
  }
  return sum.value();
}

}  // namespace relurec
