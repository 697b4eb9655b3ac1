#include "relurec/gauss_expect.hpp"

#include <cmath>

namespace relurec {

namespace {

// Clamped angle between unit directions; rounding can push the dot product
// slightly outside [-1, 1] and arccos would return NaN.
double angle_from_cos(double c) { return std::acos(std::min(1.0, std::max(-1.0, c))); }

}  // namespace

double relu_pair_kernel(const Vector& w, const Vector& u) {
  const double nw = w.norm();
  const double nu = u.norm();
  if (nw < kNormFloor || nu < kNormFloor) return 0.0;
  const double theta = angle_from_cos(w.dot(u) / (nw * nu));
  return nw * nu / (2.0 * M_PI) * (std::sin(theta) + (M_PI - theta) * std::cos(theta));
}

Vector relu_pair_kernel_grad(const Vector& w, const Vector& u) {
  const double nw = w.norm();
  if (nw < kNormFloor) throw DegenerateInput("relu_pair_kernel_grad: |w| below norm floor");
  const double nu = u.norm();
  if (nu < kNormFloor) return Vector::Zero(w.size());
  const double theta = angle_from_cos(w.dot(u) / (nw * nu));
  return (nu * std::sin(theta) / (2.0 * M_PI)) * (w / nw) + ((M_PI - theta) / (2.0 * M_PI)) * u;
}

std::pair<double, Vector> relu_low_order_moments(const Vector& w) {
  return {w.norm() / std::sqrt(2.0 * M_PI), 0.5 * w};
}

double sigma_ge2_kernel(const Vector& wbar, const Vector& ubar) {
  if (std::abs(wbar.norm() - 1.0) > 1e-10 || std::abs(ubar.norm() - 1.0) > 1e-10) {
    throw DegenerateInput("sigma_ge2_kernel: inputs must be unit vectors");
  }
  const double c = std::min(1.0, std::max(-1.0, wbar.dot(ubar)));
  return relu_pair_kernel(wbar, ubar) - 1.0 / (2.0 * M_PI) - 0.25 * c;
}

}  // namespace relurec
