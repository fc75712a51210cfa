#pragma once

#include "occuhet/data.hpp"
#include "occuhet/fit.hpp"

#include <vector>

namespace occuhet {

/// Asymptotic bias of the homogeneous ZIP presence estimate when the detection
/// intensity varies with mean mu and variance sigma2: the estimate tends to
/// rho psi with rho = {1 + 0.5 sigma2 / (e^mu - 1 - mu)}^-1.
struct BiasReport {
  double mu = 0.0;
  double sigma2 = 0.0;
  double psi = 1.0;
  double rho = 1.0;
  double asymptotic_limit = 1.0;  // rho psi
  double relative_bias = 0.0;     // rho - 1

  double relative_bias_pct() const { return 100.0 * relative_bias; }
};

BiasReport bias_rho(double mu, double sigma2, double psi = 1.0);

struct OmegaResult {
  double exact = 0.0;
  double approx = 0.0;
};

/// Limit of the constant-psi estimate under heterogeneous psi_i: root of
/// sum (pi_i psi_i - w pi_i) / (1 - w pi_i) = 0 on (0, 1 / max pi), and the
/// ratio mean(psi pi) / mean(pi).
OmegaResult limit_omega(const std::vector<double>& pi, const std::vector<double>& psi);

/// Horvitz-Thompson average presence psi~ = (1/n) sum over detected sites of
/// 1 / pi_i, with pi_i from the conditional-likelihood detection fit.
struct HtEstimate {
  double psi_bar_hat = 0.0;
  double variance = 0.0;
  double se = 0.0;
  long n = 0;
  long detected = 0;
  std::vector<double> pi_hat;  // detected sites, in dataset order
  bool boundary = false;       // psi~ > 1
};

/// Point estimate only, for given detection coefficients.
HtEstimate ht_at(const Dataset& dataset, const Formula& detection, const Vector& theta);

/// psi~ and its standard error from a CL detection fit of the dataset's family.
HtEstimate ht_psi_bar(const Dataset& dataset, const FitResult& detection_fit);

/// n^-2 [ sum_A (1 - psi~ pi_i) / pi_i^2 + D' var(theta) D ],
/// D = sum_A (d pi_i / d theta) / pi_i^2.
double ht_variance(const Dataset& dataset, const FitResult& detection_fit, const HtEstimate& ht);

nlohmann::json to_json(const BiasReport& report);
nlohmann::json to_json(const HtEstimate& ht);

}  // namespace occuhet
