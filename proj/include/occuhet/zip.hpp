#pragma once

#include "occuhet/cells.hpp"
#include "occuhet/data.hpp"
#include "occuhet/fit.hpp"

#include <memory>
#include <vector>

namespace occuhet {

/// Mixing distribution for the Poisson detection intensity, natural scale.
struct MixtureSpec {
  MixtureKind kind = MixtureKind::gamma;
  // gamma kind: NB(kappa, mu / kappa)
  double mu = 1.0;
  double kappa = 1.0;
  // finite kind: intensities (increasing) and weights (sum to 1)
  std::vector<double> lambdas;
  std::vector<double> weights;

  static MixtureSpec gamma(double mu, double kappa);
  static MixtureSpec finite(std::vector<double> lambdas, std::vector<double> weights);

  /// Throws ValidationError when an invariant is violated.
  void validate() const;
  Vector working() const;
  std::unique_ptr<CellModel> cells() const;
};

/// p_k = integral of Poisson(k; lambda) against the mixing distribution.
double cell_prob(const MixtureSpec& spec, int k);

using ZipFit = FitResult;

/// Homogeneous ZIP. CL solves lambda / (1 - e^-lambda) = mean of positive
/// counts, then psi = m+ / {n (1 - e^-lambda)}; ML maximizes the joint
/// likelihood from that start.
ZipFit fit_zip_homogeneous(const FrequencyTable& freq, Method method,
                           const OptimOptions& options = {});

/// Gamma (negative binomial) or finite Poisson mixture for the intensity.
ZipFit fit_zip_mixture(const FrequencyTable& freq, const MixtureChoice& mixture, Method method,
                       const OptimOptions& options = {});

/// Log-linear intensity lambda_i = exp(theta'x_i) with constant or logistic
/// presence. See fit_regression.
ZipFit fit_zip_regression(const Dataset& dataset, const Formula& detection,
                          const Formula& occurrence, Method method,
                          const OptimOptions& options = {});

/// Per-site estimating-function components at a constant-psi regression fit.
struct ScoreComponents {
  std::vector<double> g;          // I_i * (d log f / d eta - (d pi / d eta) / pi)
  std::vector<double> h;          // (I_i - psi pi_i) / {psi (1 - psi pi_i)}
  std::vector<double> pi;         // P(y_i > 0 | occupied)
  std::vector<double> intensity;  // lambda_i (poisson) or p_i (binomial)
  std::vector<int> indicator;     // I(y_i > 0)
  Vector conditional_score;       // sum_i g_i x_i
  double psi_score = 0.0;         // sum_i h_i
  Vector full_theta_score;        // sum_i {g_i + psi (d pi / d eta)_i / pi_i h_i} x_i
};

ScoreComponents score_components(const FitResult& fit, const Dataset& dataset);

}  // namespace occuhet
