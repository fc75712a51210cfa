#pragma once

#include "occuhet/data.hpp"
#include "occuhet/fit.hpp"

namespace occuhet {

/// Response model of an occupied site given its detection linear predictor
/// eta = theta'x: Poisson with lambda = exp(eta), or Binomial(T, H(eta)).
class DetectionLink {
 public:
  DetectionLink(Family family, int visits);

  Family family() const { return family_; }
  int visits() const { return visits_; }

  /// lambda (poisson) or p (binomial).
  double intensity(double eta) const;
  double log_density(int y, double eta) const;
  /// d log f(y | eta) / d eta
  double score(int y, double eta) const;
  /// pi = P(y > 0 | occupied)
  double pi(double eta) const;
  double log_pi(double eta) const;
  /// d pi / d eta
  double dpi(double eta) const;

 private:
  Family family_;
  int visits_;
};

/// Zero-inflated regression: detection eta_i = theta'x_i through the family's
/// link, presence psi_i = H(gamma'z_i) (constant psi when the occurrence
/// formula is intercept-only).
///
/// ML maximizes the joint likelihood. CL maximizes the zero-truncated
/// likelihood over detected sites for theta, then either solves the
/// constant-psi root equation by bisection or maximizes the presence
/// likelihood in gamma with the fitted pi_i held fixed. CL variances add the
/// delta-method propagation of var(theta) into the presence stage.
FitResult fit_regression(const Dataset& dataset, const Formula& detection,
                         const Formula& occurrence, Method method,
                         const OptimOptions& options = {});

/// Left side of the constant-psi root equation:
/// m+ / psi - sum over undetected sites of pi_i / (1 - psi pi_i).
double psi_root_equation(double psi, long m_plus, const std::vector<double>& pi_undetected);

/// Solves the root equation on (1e-12, 1 - 1e-12) to 1e-10. Returns 1 with
/// `at_boundary` set when the left side stays positive at the upper end.
double solve_psi_root(long m_plus, const std::vector<double>& pi_undetected, bool* at_boundary);

}  // namespace occuhet
