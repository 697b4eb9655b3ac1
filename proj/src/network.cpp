#include "relurec/network.hpp"

#include <cmath>

#include "json.hpp"
#include "relurec/rng.hpp"

namespace relurec {

namespace {

using nlohmann::ordered_json;

// Unsigned angle arccos(|u.v| / |u||v|) in [0, pi/2].
double unsigned_angle(const Vector& u, const Vector& v) {
  const double c = std::abs(u.dot(v)) / (u.norm() * v.norm());
  return std::acos(std::min(1.0, c));
}

ordered_json matrix_to_json(const Matrix& m) {
  ordered_json rows = ordered_json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

ordered_json vector_to_json(const Vector& v) {
  ordered_json arr = ordered_json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Matrix matrix_from_json(const ordered_json& j) {
  const Index rows = static_cast<Index>(j.size());
  if (rows == 0) return Matrix(0, 0);
  const Index cols = static_cast<Index>(j[0].size());
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    if (static_cast<Index>(j[i].size()) != cols) throw ConfigError("ragged matrix in JSON");
    for (Index c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

Vector vector_from_json(const ordered_json& j) {
  Vector v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

}  // namespace

Teacher sample_teacher(const TeacherOptions& opts) {
  if (opts.r < 1 || opts.r > opts.d) throw ConfigError("sample_teacher: need 1 <= r <= d");
  if (opts.m_star < opts.r) throw ConfigError("sample_teacher: need m* >= r");
  if (opts.a_magnitudes.size() != opts.m_star)
    throw ConfigError("sample_teacher: a_magnitudes must have m* entries");
  if ((opts.a_magnitudes.array() == 0.0).any())
    throw ConfigError("sample_teacher: a_magnitudes must be nonzero");
  if (!(opts.delta_min > 0.0 && opts.delta_min < M_PI / 2))
    throw ConfigError("sample_teacher: delta_min must be in (0, pi/2)");

  CounterRng rng(opts.seed);
  const double kappa_floor =
      opts.kappa_floor >= 0.0 ? opts.kappa_floor : 0.1 * opts.a_magnitudes.cwiseAbs().minCoeff();

  // Haar-uniform subspace basis.
  Matrix g(opts.d, opts.r);
  for (Index j = 0; j < opts.r; ++j) g.col(j) = rng.normal_vector(opts.d);
  const Matrix basis =
      Eigen::HouseholderQR<Matrix>(g).householderQ() * Matrix::Identity(opts.d, opts.r);

  Teacher t;
  t.subspace_basis = basis;
  t.a_star = opts.a_magnitudes;
  t.w_star.resize(opts.m_star, opts.d);

  for (long attempt = 0; attempt < opts.max_attempts; ++attempt) {
    for (Index i = 0; i < opts.m_star; ++i) {
      t.w_star.row(i) = (basis * rng.unit_vector(opts.r)).transpose();
    }
    double min_angle = M_PI;
    for (Index i = 0; i < opts.m_star; ++i) {
      for (Index j = i + 1; j < opts.m_star; ++j) {
        min_angle = std::min(min_angle, unsigned_angle(t.w_star.row(i), t.w_star.row(j)));
      }
    }
    if (opts.m_star > 1 && min_angle < opts.delta_min) continue;

    // H restricted to the subspace must have r eigenvalues above the floor.
    Matrix h = Matrix::Zero(opts.d, opts.d);
    for (Index i = 0; i < opts.m_star; ++i) {
      h.noalias() += t.a_star[i] * t.w_star.row(i).transpose() * t.w_star.row(i);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(basis.transpose() * h * basis);
    const double kappa = es.eigenvalues().cwiseAbs().minCoeff();
    if (kappa < kappa_floor) continue;

    t.delta_sep = opts.m_star > 1 ? min_angle : M_PI / 2;
    t.kappa = kappa;
    t.alpha_star = t.a_star.sum() / std::sqrt(2.0 * M_PI);
    t.beta_star = 0.5 * t.w_star.transpose() * t.a_star;
    return t;
  }
  throw RejectionBudgetExhausted("sample_teacher: rejection budget exhausted (geometry infeasible)");
}

Student init_student(Index m, Index d, std::uint64_t seed) {
  if (m < 2 || m % 2 != 0) throw ConfigError("init_student: m must be even and >= 2");
  CounterRng rng(seed);
  Student s;
  s.a.resize(m);
  s.w.resize(m, d);
  s.alpha = 0.0;
  s.beta = Vector::Zero(d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  const double amag = std::sqrt(static_cast<double>(d));
  for (Index i = 0; i < m / 2; ++i) {
    s.a[i] = rng.sign() * amag;
    s.w.row(i) = (scale * rng.unit_vector(d)).transpose();
    s.a[m / 2 + i] = -s.a[i];
    s.w.row(m / 2 + i) = s.w.row(i);
  }
  return s;
}

double teacher_preprocessed(const Teacher& teacher, const Vector& x) {
  double f = 0.0;
  for (Index i = 0; i < teacher.m_star(); ++i) {
    f += teacher.a_star[i] * std::max(teacher.w_star.row(i).dot(x), 0.0);
  }
  return f - teacher.alpha_star - teacher.beta_star.dot(x);
}

std::pair<double, double> forward(const Student& student, const Teacher& teacher, const Vector& x) {
  double f = student.alpha + student.beta.dot(x);
  for (Index i = 0; i < student.width(); ++i) {
    f += student.a[i] * std::max(student.w.row(i).dot(x), 0.0);
  }
  return {f, f - teacher_preprocessed(teacher, x)};
}

std::string student_to_json(const Student& s) {
  ordered_json j;
  j["a"] = vector_to_json(s.a);
  j["W"] = matrix_to_json(s.w);
  j["alpha"] = s.alpha;
  j["beta"] = vector_to_json(s.beta);
  return j.dump(2);
}

Student student_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("student JSON parse error: ") + e.what());
  }
  Student s;
  s.a = vector_from_json(j.at("a"));
  s.w = matrix_from_json(j.at("W"));
  s.alpha = j.at("alpha").get<double>();
  s.beta = vector_from_json(j.at("beta"));
  if (s.w.rows() != s.a.size() || s.beta.size() != s.w.cols())
    throw ConfigError("student JSON has inconsistent dimensions");
  return s;
}

std::string teacher_to_json(const Teacher& t) {
  ordered_json j;
  j["a"] = vector_to_json(t.a_star);
  j["W"] = matrix_to_json(t.w_star);
  j["alpha"] = t.alpha_star;
  j["beta"] = vector_to_json(t.beta_star);
  j["subspace_basis"] = matrix_to_json(t.subspace_basis);
  j["delta_sep"] = t.delta_sep;
  j["kappa"] = t.kappa;
  return j.dump(2);
}

Teacher teacher_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("teacher JSON parse error: ") + e.what());
  }
  Teacher t;
  t.a_star = vector_from_json(j.at("a"));
  t.w_star = matrix_from_json(j.at("W"));
  t.alpha_star = j.at("alpha").get<double>();
  t.beta_star = vector_from_json(j.at("beta"));
  t.subspace_basis = matrix_from_json(j.at("subspace_basis"));
  t.delta_sep = j.at("delta_sep").get<double>();
  t.kappa = j.at("kappa").get<double>();
  if (t.w_star.rows() != t.a_star.size() || t.beta_star.size() != t.w_star.cols())
    throw ConfigError("teacher JSON has inconsistent dimensions");
  return t;
}

}  // namespace relurec
