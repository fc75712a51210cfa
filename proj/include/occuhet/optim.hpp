#pragma once

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>

namespace occuhet {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

using Objective = std::function<double(const Vector&)>;
using Gradient = std::function<Vector(const Vector&)>;

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OptimOptions {
  double gradient_tolerance = 1e-8;
  int max_iterations = 200;
  int step_halving_max = 30;
  /// Relative step for central differences; 0 selects cbrt(machine epsilon).
  double finite_difference_step = 0.0;
  /// Largest Newton step (Euclidean, working scale) taken in one iteration.
  double max_step = 10.0;
};

struct OptimResult {
  Vector argmax;
  double value = std::numeric_limits<double>::quiet_NaN();
  Vector gradient;
  double gradient_norm = std::numeric_limits<double>::infinity();
  /// Observed second-derivative matrix at argmax.
  Matrix hessian;
  bool converged = false;
  bool diverged = false;
  bool singular_hessian = false;
  /// True when the Hessian at argmax is negative definite.
  bool negative_definite = false;
  int iterations = 0;
};

/// Newton ascent with step halving. The Hessian comes from central differences
/// of `gradient` (or of function values when no gradient is supplied). When the
/// Hessian is not negative definite the step uses its absolute eigenvalues, and
/// a plain gradient step is tried when the Newton step fails to ascend.
OptimResult maximize(const Objective& objective, const Gradient& gradient, const Vector& init,
                     const OptimOptions& options = {});

/// Bisection on [lo, hi]; requires f(lo) * f(hi) <= 0.
double find_root(const std::function<double(double)>& f, double lo, double hi, double tol);

/// Central-difference gradient of f at x.
Vector numeric_gradient(const Objective& f, const Vector& x, double relative_step = 0.0);

/// Central second differences of function values, symmetrized.
Matrix numeric_hessian(const Objective& f, const Vector& x, double relative_step = 0.0);

/// Jacobian of a vector-valued map by central differences (rows = outputs).
Matrix numeric_jacobian(const Gradient& g, const Vector& x, double relative_step = 0.0);

/// Central differences of an analytic gradient, symmetrized.
Matrix hessian_from_gradient(const Gradient& g, const Vector& x, double relative_step = 0.0);

/// Inverse of a symmetric positive (semi)definite matrix. Falls back to the
/// eigen pseudo-inverse when the matrix is singular; `singular` reports that.
Matrix invert_symmetric(const Matrix& m, bool* singular = nullptr);

/// Variance matrix from a log-likelihood Hessian: inverse of -H.
Matrix covariance_from_hessian(const Matrix& hessian, bool* singular = nullptr);

}  // namespace occuhet
