#include "occuhet/zib.hpp"

#include "occuhet/regression.hpp"

#include <cmath>

namespace occuhet {

double detection_pi(double p, int visits) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("detection probability outside [0, 1]");
  return -std::expm1(visits * std::log1p(-p));
}

double beta_binomial_prob(int visits, double alpha, double beta, int k) {
  if (!(alpha > 0.0 && beta > 0.0)) throw ValidationError("beta shapes must be positive");
  if (k < 0 || k > visits) return 0.0;
  Vector theta(2);
  theta << std::log(alpha) - std::log(beta), std::log(alpha + beta);
  return std::exp(BetaBinomialCells(visits).log_prob(k, theta, nullptr));
}

namespace {

void check_table(const FrequencyTable& freq, int visits) {
  if (freq.n() == 0) throw ValidationError("frequency table is empty");
  if (freq.m_plus() == 0) throw ValidationError("presence unidentifiable: no site has a detection");
  if (freq.max_count() > visits) throw ValidationError("count exceeds the number of visits");
}

// Every detected site was seen on every visit: p = 1 and psi = m+/n.
FitResult perfect_detection_fit(const FrequencyTable& freq, int visits, Method method) {
  const BinomialCells cells(visits);
  const double n = static_cast<double>(freq.n());
  const double psi = static_cast<double>(freq.m_plus()) / n;
  FitResult fit;
  fit.family = Family::binomial;
  fit.method = method;
  fit.visits = visits;
  fit.n = freq.n();
  fit.detected = freq.m_plus();
  fit.n_detection = 1;
  fit.names = {"logit_p", "psi"};
  fit.estimate = Vector(2);
  fit.estimate << std::numeric_limits<double>::infinity(), psi;
  fit.vcov = Matrix::Zero(2, 2);
  fit.vcov(1, 1) = psi * (1.0 - psi) / n;
  fit.psi_hat = psi;
  fit.psi_se = std::sqrt(fit.vcov(1, 1));
  const double m_zero = static_cast<double>(freq.m_zero());
  fit.loglik = static_cast<double>(freq.m_plus()) * std::log(psi) +
               (m_zero > 0.0 ? m_zero * std::log1p(-psi) : 0.0);
  fit.aic = -2.0 * fit.loglik + 4.0;
  fit.converged = true;
  fit.detection_boundary = true;
  fit.psi_boundary = psi >= 1.0;
  fit.notes.push_back("perfect_detection");
  fit.derived = {{"p", 1.0, 0.0}, {"p_plus", 1.0, 0.0}};
  fit.cell_probs.assign(static_cast<std::size_t>(visits) + 1, 0.0);
  fit.cell_probs.back() = 1.0;
  return fit;
}

}  // namespace

FitResult fit_zib_homogeneous(const FrequencyTable& freq, int visits, Method method,
                              const OptimOptions& options) {
  if (visits < 2) throw ValidationError("psi and p jointly unidentifiable with T = 1");
  check_table(freq, visits);
  const BinomialCells cells(visits);
  const double mean = freq.total_positive() / static_cast<double>(freq.m_plus());
  if (mean <= 1.0) return vanishing_detection_fit(freq, cells, method);
  if (mean >= visits) return perfect_detection_fit(freq, visits, method);
  return fit_frequency_model(freq, cells, method, {options, std::nullopt});
}

FitResult fit_zib_mixture(const FrequencyTable& freq, int visits, Method method,
                          const OptimOptions& options) {
  if (visits < 3) throw ValidationError("beta-binomial detection needs T >= 3");
  check_table(freq, visits);
  const BetaBinomialCells cells(visits);
  const FitResult base = fit_zib_homogeneous(freq, visits, method, options);
  if (freq.distinct_positive() < 3) {
    FitResult fit = base.converged && !base.detection_boundary
                        ? at_nested_limit(base, cells, "binomial_limit")
                        : base;
    flag_insufficient_support(fit);
    return fit;
  }
  FitResult fit = fit_frequency_model(freq, cells, method, {options, std::nullopt});
  const double precision = std::exp(fit.estimate[1]);
  const bool diverging = !(precision <= BetaBinomialCells::kBinomialLimit) ||
                         (!fit.converged && precision > 1e3) ||
                         (base.converged && fit.loglik < base.loglik);
  if (diverging && base.converged && !base.detection_boundary)
    return at_nested_limit(base, cells, "binomial_limit");
  return fit;
}

FitResult fit_zib_regression(const Dataset& dataset, const Formula& detection,
                             const Formula& occurrence, Method method,
                             const OptimOptions& options) {
  if (dataset.family() != Family::binomial)
    throw ValidationError("zero-inflated binomial regression needs a binomial dataset");
  if (dataset.visits() < 2) throw ValidationError("psi and p jointly unidentifiable with T = 1");
  return fit_regression(dataset, detection, occurrence, method, options);
}

}  // namespace occuhet
