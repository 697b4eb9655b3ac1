#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace relurec {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Eigen::Index;

// Base for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid user input (config files, CLI arguments, malformed JSON). Exit code 2.
struct ConfigError : Error {
  using Error::Error;
};

// Numeric failure during a computation. Exit code 3.
struct NumericError : Error {
  using Error::Error;
};

struct RejectionBudgetExhausted : NumericError {
  using NumericError::NumericError;
};

struct StepSizeCollapse : NumericError {
  using NumericError::NumericError;
};

struct DivergenceError : NumericError {
  using NumericError::NumericError;
};

struct IllConditionedSystem : NumericError {
  using NumericError::NumericError;
};

struct CertificateDegenerate : NumericError {
  using NumericError::NumericError;
};

struct DegenerateInput : NumericError {
  using NumericError::NumericError;
};

// Neumaier compensated summation. Pairwise sums of kernel terms cancel against
// each other down to ~1e-8 late in training while individual terms are O(1).
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline constexpr double kNormFloor = 1e-14;  // below this a neuron counts as dead

}  // namespace relurec
