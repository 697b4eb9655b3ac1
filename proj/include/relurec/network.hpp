#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "relurec/types.hpp"

namespace relurec {

// Teacher-student parameterization under Gaussian input. Teacher rows are
// unit directions spanning an r-dimensional target subspace; the student is
// an overparameterized two-layer ReLU network with a linear head.

struct Teacher {
  Vector a_star;          // second-layer weights a_i^*
  Matrix w_star;          // m* x d, unit rows w_i^*
  Matrix subspace_basis;  // d x r, orthonormal, spans S_*
  double delta_sep = 0.0; // achieved min pairwise angle
  double kappa = 0.0;     // |lambda_r| of H = sum a_i^* w_i^* w_i^*T
  double alpha_star = 0.0;
  Vector beta_star;

  Index m_star() const { return a_star.size(); }
  Index dim() const { return w_star.cols(); }
  double a_l1() const { return a_star.lpNorm<1>(); }
};

struct Student {
  Vector a;   // m
  Matrix w;   // m x d, rows w_i
  double alpha = 0.0;
  Vector beta;

  Index width() const { return a.size(); }
  Index dim() const { return w.cols(); }
};

struct TeacherOptions {
  Index d = 8;
  Index r = 2;
  Index m_star = 2;
  double delta_min = 0.3;
  Vector a_magnitudes;            // signed, one per teacher neuron
  std::uint64_t seed = 0;
  double kappa_floor = -1.0;      // < 0 means the default 0.1 * min |a_i^*|
  long max_attempts = 100000;
};

// Haar subspace + uniform in-subspace directions, rejected until the
// delta-separation and rank/kappa conditions hold.
Teacher sample_teacher(const TeacherOptions& opts);

// Symmetric initialization: a_i = -a_{i+m/2} ~ Unif{+-sqrt(d)},
// w_i = w_{i+m/2} ~ Unif((1/sqrt(m)) S^{d-1}), alpha = 0, beta = 0.
// The network output is identically zero at t = 0.
Student init_student(Index m, Index d, std::uint64_t seed);

// f(x; theta) and the residual f - (f_*(x) - alpha_* - beta_*.x).
std::pair<double, double> forward(const Student& student, const Teacher& teacher, const Vector& x);

// Preprocessed target alone: f_*(x) - alpha_* - beta_*.x.
double teacher_preprocessed(const Teacher& teacher, const Vector& x);

// JSON round-trips: {"a": [...], "W": [[...]], "alpha": x, "beta": [...]},
// full double precision; teacher files carry extra geometry fields.
std::string student_to_json(const Student& s);
Student student_from_json(const std::string& text);
std::string teacher_to_json(const Teacher& t);
Teacher teacher_from_json(const std::string& text);

}  // namespace relurec
