#pragma once

#include "occuhet/cells.hpp"
#include "occuhet/data.hpp"
#include "occuhet/fit.hpp"

namespace occuhet {

/// pi = 1 - (1 - p)^T, the probability of at least one detection in T visits.
double detection_pi(double p, int visits);

/// Beta-binomial mass at k for T visits and shapes (alpha, beta).
double beta_binomial_prob(int visits, double alpha, double beta, int k);

/// Homogeneous ZIB. CL solves T p / (1 - (1 - p)^T) = mean of positive counts,
/// then psi = m+ / (n pi). Needs T >= 2.
FitResult fit_zib_homogeneous(const FrequencyTable& freq, int visits, Method method,
                              const OptimOptions& options = {});

/// Beta-binomial detection heterogeneity. Needs T >= 3.
FitResult fit_zib_mixture(const FrequencyTable& freq, int visits, Method method,
                          const OptimOptions& options = {});

/// Logistic detection p_i = H(theta'x_i) with constant or logistic presence.
FitResult fit_zib_regression(const Dataset& dataset, const Formula& detection,
                             const Formula& occurrence, Method method,
                             const OptimOptions& options = {});

}  // namespace occuhet
