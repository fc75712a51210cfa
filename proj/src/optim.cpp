#include "occuhet/optim.hpp"

#include <algorithm>
#include <cmath>

namespace occuhet {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

double default_step(double relative_step) {
  return relative_step > 0.0 ? relative_step : std::cbrt(kEps);
}

bool is_ascent(double candidate, double current) {
  // Accept ties within rounding so the final Newton polish can land.
  return std::isfinite(candidate) &&
         candidate >= current - 8.0 * kEps * std::max(1.0, std::abs(current));
}

}  // namespace

Vector numeric_gradient(const Objective& f, const Vector& x, double relative_step) {
  const double rel = default_step(relative_step);
  Vector g(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = rel * (std::abs(x[i]) + 1.0);
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

Matrix numeric_hessian(const Objective& f, const Vector& x, double relative_step) {
  // Second differences of values need a larger step than first differences.
  const double rel = relative_step > 0.0 ? relative_step : std::sqrt(std::sqrt(kEps));
  const Eigen::Index p = x.size();
  Vector h(p);
  for (Eigen::Index i = 0; i < p; ++i) h[i] = rel * (std::abs(x[i]) + 1.0);
  const double f0 = f(x);
  if (!std::isfinite(f0)) throw NumericalError("non-finite objective in numeric_hessian");
  Matrix H(p, p);
  Vector probe = x;
  auto eval = [&](const Vector& v) {
    const double value = f(v);
    if (!std::isfinite(value)) throw NumericalError("non-finite objective in numeric_hessian");
    return value;
  };
  for (Eigen::Index i = 0; i < p; ++i) {
    probe[i] = x[i] + h[i];
    const double up = eval(probe);
    probe[i] = x[i] - h[i];
    const double down = eval(probe);
    probe[i] = x[i];
    H(i, i) = (up - 2.0 * f0 + down) / (h[i] * h[i]);
    for (Eigen::Index j = 0; j < i; ++j) {
      double acc = 0.0;
      for (int si : {1, -1}) {
        for (int sj : {1, -1}) {
          probe[i] = x[i] + si * h[i];
          probe[j] = x[j] + sj * h[j];
          acc += si * sj * eval(probe);
        }
      }
      probe[i] = x[i];
      probe[j] = x[j];
      H(i, j) = H(j, i) = acc / (4.0 * h[i] * h[j]);
    }
  }
  return 0.5 * (H + H.transpose());
}

Matrix numeric_jacobian(const Gradient& g, const Vector& x, double relative_step) {
  const double rel = default_step(relative_step);
  const Vector g0 = g(x);
  Matrix J(g0.size(), x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = rel * (std::abs(x[i]) + 1.0);
    probe[i] = x[i] + h;
    const Vector up = g(probe);
    probe[i] = x[i] - h;
    const Vector down = g(probe);
    probe[i] = x[i];
    J.col(i) = (up - down) / (2.0 * h);
  }
  if (!J.allFinite()) throw NumericalError("non-finite gradient in numeric_jacobian");
  return J;
}

Matrix hessian_from_gradient(const Gradient& g, const Vector& x, double relative_step) {
  const Matrix J = numeric_jacobian(g, x, relative_step);
  return 0.5 * (J + J.transpose());
}

Matrix invert_symmetric(const Matrix& m, bool* singular) {
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (m + m.transpose()));
  const Vector& values = eig.eigenvalues();
  const double scale = values.cwiseAbs().maxCoeff();
  const double cutoff = scale * 1e-12 * static_cast<double>(m.rows());
  bool is_singular = false;
  Vector inv(values.size());
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (std::abs(values[i]) <= cutoff || !std::isfinite(values[i])) {
      inv[i] = 0.0;
      is_singular = true;
    } else {
      inv[i] = 1.0 / values[i];
    }
  }
  if (singular) *singular = is_singular;
  const Matrix result = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (result + result.transpose());
}

Matrix covariance_from_hessian(const Matrix& hessian, bool* singular) {
  return invert_symmetric(-hessian, singular);
}

OptimResult maximize(const Objective& objective, const Gradient& gradient, const Vector& init,
                     const OptimOptions& options) {
  const Gradient grad =
      gradient ? gradient
               : Gradient([&](const Vector& v) {
                   return numeric_gradient(objective, v, options.finite_difference_step);
                 });
  auto hessian_at = [&](const Vector& v) {
    return gradient ? hessian_from_gradient(gradient, v, options.finite_difference_step)
                    : numeric_hessian(objective, v);
  };

  OptimResult result;
  Vector x = init;
  double f = objective(x);
  if (!std::isfinite(f)) throw NumericalError("objective is not finite at the initial point");

  Vector g = grad(x);
  for (int it = 0; it < options.max_iterations; ++it) {
    result.iterations = it;
    if (!g.allFinite()) {
      result.diverged = true;
      break;
    }
    if (g.norm() <= options.gradient_tolerance) break;

    Matrix H;
    try {
      H = hessian_at(x);
    } catch (const NumericalError&) {
      result.diverged = true;
      break;
    }
    // Step on the absolute spectrum of -H: Newton when -H is positive definite,
    // otherwise a positive definite modification that still ascends.
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(-H);
    Vector values = eig.eigenvalues();
    const double floor = std::max(1e-10, 1e-10 * values.cwiseAbs().maxCoeff());
    bool modified = false;
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      if (!(values[i] > floor)) {
        modified = true;
        values[i] = std::max(std::abs(values[i]), floor);
      }
    }
    result.singular_hessian = result.singular_hessian || modified;
    Vector direction =
        eig.eigenvectors() * (eig.eigenvectors().transpose() * g).cwiseQuotient(values);
    if (!direction.allFinite()) direction = g;
    const double length = direction.norm();
    if (length > options.max_step) direction *= options.max_step / length;

    auto line_search = [&](const Vector& d, Vector& x_new, double& f_new) {
      double t = 1.0;
      for (int k = 0; k <= options.step_halving_max; ++k, t *= 0.5) {
        x_new = x + t * d;
        f_new = objective(x_new);
        if (is_ascent(f_new, f)) return true;
      }
      return false;
    };

    Vector x_new;
    double f_new = f;
    bool moved = line_search(direction, x_new, f_new);
    if (!moved) {
      Vector d = g;
      const double gn = d.norm();
      if (gn > 1.0) d /= gn;
      moved = line_search(d, x_new, f_new);
    }
    if (!moved) {
      if (!std::isfinite(f_new)) result.diverged = true;
      break;
    }
    const bool stalled = (x_new - x).norm() == 0.0;
    x = std::move(x_new);
    f = f_new;
    g = grad(x);
    result.iterations = it + 1;
    if (stalled) break;
  }

  result.argmax = x;
  result.value = f;
  result.gradient = g;
  result.gradient_norm = g.allFinite() ? g.norm() : std::numeric_limits<double>::infinity();
  result.converged = !result.diverged && result.gradient_norm <= options.gradient_tolerance;
  try {
    result.hessian = hessian_at(x);
    if (result.hessian.allFinite()) {
      const Eigen::SelfAdjointEigenSolver<Matrix> eig(-result.hessian);
      result.negative_definite = eig.eigenvalues().minCoeff() > 0.0;
    }
  } catch (const NumericalError&) {
    result.hessian = Matrix::Constant(x.size(), x.size(), std::numeric_limits<double>::quiet_NaN());
  }
  return result;
}

double find_root(const std::function<double(double)>& f, double lo, double hi, double tol) {
  if (!(lo < hi)) throw std::invalid_argument("bracket invalid: lo must be below hi");
  double f_lo = f(lo);
  const double f_hi = f(hi);
  if (!std::isfinite(f_lo) || !std::isfinite(f_hi) || f_lo * f_hi > 0.0)
    throw std::invalid_argument("bracket invalid: no sign change");
  if (f_lo == 0.0) return lo;
  if (f_hi == 0.0) return hi;
  while (hi - lo >= tol) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double f_mid = f(mid);
    if (f_mid == 0.0) return mid;
    if ((f_mid < 0.0) == (f_lo < 0.0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace occuhet
