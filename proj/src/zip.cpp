#include "occuhet/zip.hpp"

#include "occuhet/regression.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace occuhet {

MixtureSpec MixtureSpec::gamma(double mu, double kappa) {
  MixtureSpec spec;
  spec.kind = MixtureKind::gamma;
  spec.mu = mu;
  spec.kappa = kappa;
  spec.validate();
  return spec;
}

MixtureSpec MixtureSpec::finite(std::vector<double> lambdas, std::vector<double> weights) {
  MixtureSpec spec;
  spec.kind = MixtureKind::finite;
  spec.lambdas = std::move(lambdas);
  spec.weights = std::move(weights);
  spec.validate();
  return spec;
}

void MixtureSpec::validate() const {
  if (kind == MixtureKind::gamma) {
    if (!(mu > 0.0) || !std::isfinite(mu)) throw ValidationError("gamma mixture needs mu > 0");
    if (!(kappa > 0.0) || !std::isfinite(kappa))
      throw ValidationError("gamma mixture needs kappa > 0");
    return;
  }
  if (kind != MixtureKind::finite) throw ValidationError("unsupported mixture kind for counts");
  if (lambdas.empty() || lambdas.size() != weights.size())
    throw ValidationError("finite mixture needs matching intensities and weights");
  double total = 0.0;
  for (std::size_t c = 0; c < lambdas.size(); ++c) {
    if (!(lambdas[c] > 0.0) || !std::isfinite(lambdas[c]))
      throw ValidationError("finite mixture intensities must be positive");
    if (c > 0 && !(lambdas[c] > lambdas[c - 1]))
      throw ValidationError("finite mixture intensities must be increasing");
    if (!(weights[c] > 0.0)) throw ValidationError("finite mixture weights must be positive");
    total += weights[c];
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("finite mixture weights must sum to 1");
}

Vector MixtureSpec::working() const {
  validate();
  if (kind == MixtureKind::gamma) {
    Vector theta(2);
    theta << std::log(mu), std::log(kappa);
    return theta;
  }
  const auto c = static_cast<Eigen::Index>(lambdas.size());
  Vector theta(2 * c - 1);
  for (Eigen::Index j = 0; j < c; ++j) theta[j] = std::log(lambdas[static_cast<std::size_t>(j)]);
  for (Eigen::Index j = 1; j < c; ++j)
    theta[c + j - 1] = std::log(weights[static_cast<std::size_t>(j)] / weights[0]);
  return theta;
}

std::unique_ptr<CellModel> MixtureSpec::cells() const {
  if (kind == MixtureKind::gamma) return std::make_unique<NegativeBinomialCells>();
  return std::make_unique<FinitePoissonCells>(static_cast<int>(lambdas.size()));
}

double cell_prob(const MixtureSpec& spec, int k) {
  if (k < 0) throw ValidationError("count must be nonnegative");
  return std::exp(spec.cells()->log_prob(k, spec.working(), nullptr));
}

namespace {

double positive_mean(const FrequencyTable& freq) {
  return freq.total_positive() / static_cast<double>(freq.m_plus());
}

void require_detections(const FrequencyTable& freq) {
  if (freq.n() == 0) throw ValidationError("frequency table is empty");
  if (freq.m_plus() == 0) throw ValidationError("presence unidentifiable: no site has a detection");
}

}  // namespace

ZipFit fit_zip_homogeneous(const FrequencyTable& freq, Method method, const OptimOptions& options) {
  require_detections(freq);
  const PoissonCells cells;
  if (positive_mean(freq) <= 1.0) return vanishing_detection_fit(freq, cells, method);
  return fit_frequency_model(freq, cells, method, {options, std::nullopt});
}

ZipFit fit_zip_mixture(const FrequencyTable& freq, const MixtureChoice& mixture, Method method,
                       const OptimOptions& options) {
  require_detections(freq);
  if (mixture.kind == MixtureKind::none) return fit_zip_homogeneous(freq, method, options);
  const auto cells = make_cell_model(Family::poisson, mixture, 1);
  const int needed = mixture.kind == MixtureKind::gamma ? 3 : 2 * mixture.components;
  const bool supported = freq.distinct_positive() >= needed;

  if (mixture.kind == MixtureKind::finite && mixture.components == 1)
    return fit_frequency_model(freq, *cells, method, {options, std::nullopt});

  if (mixture.kind == MixtureKind::gamma) {
    const ZipFit base = fit_zip_homogeneous(freq, method, options);
    if (!supported) {
      ZipFit fit = base.converged ? at_nested_limit(base, *cells, "poisson_limit") : base;
      flag_insufficient_support(fit);
      return fit;
    }
    ZipFit fit = fit_frequency_model(freq, *cells, method, {options, std::nullopt});
    const double kappa = std::exp(fit.estimate[1]);
    const bool diverging = !(kappa <= NegativeBinomialCells::kPoissonLimit) ||
                           (!fit.converged && kappa > 1e3) ||
                           (base.converged && fit.loglik < base.loglik);
    if (diverging && base.converged) return at_nested_limit(base, *cells, "poisson_limit");
    return fit;
  }

  ZipFit fit = fit_frequency_model(freq, *cells, method, {options, std::nullopt});
  if (!supported) flag_insufficient_support(fit);
  return fit;
}

ZipFit fit_zip_regression(const Dataset& dataset, const Formula& detection,
                          const Formula& occurrence, Method method, const OptimOptions& options) {
  if (dataset.family() != Family::poisson)
    throw ValidationError("zero-inflated Poisson regression needs a poisson dataset");
  return fit_regression(dataset, detection, occurrence, method, options);
}

ScoreComponents score_components(const FitResult& fit, const Dataset& dataset) {
  if (fit.occurrence_regression)
    throw ValidationError("score components need a constant presence probability");
  if (dataset.family() != fit.family) throw ValidationError("fit and dataset families differ");
  const Matrix x = Formula::parse(fit.detection_formula).design(dataset);
  if (x.cols() != fit.n_detection)
    throw ValidationError("fit does not match the detection design of the dataset");
  const DetectionLink link(fit.family, dataset.visits());
  const Vector theta = fit.theta();
  const double psi = fit.psi_hat;
  const auto n = static_cast<std::size_t>(x.rows());

  ScoreComponents out;
  out.g.resize(n);
  out.h.resize(n);
  out.pi.resize(n);
  out.intensity.resize(n);
  out.indicator.resize(n);
  out.conditional_score = Vector::Zero(x.cols());
  out.full_theta_score = Vector::Zero(x.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const double eta = x.row(row).dot(theta);
    const int y = dataset.y()[i];
    const int detected = y > 0 ? 1 : 0;
    const double pi = link.pi(eta);
    const double ratio = link.dpi(eta) / pi;
    const double g = detected ? link.score(y, eta) - ratio : 0.0;
    const double h = (detected - psi * pi) / (psi * (1.0 - psi * pi));
    out.g[i] = g;
    out.h[i] = h;
    out.pi[i] = pi;
    out.intensity[i] = link.intensity(eta);
    out.indicator[i] = detected;
    out.conditional_score += g * x.row(row).transpose();
    out.full_theta_score += (g + psi * ratio * h) * x.row(row).transpose();
    out.psi_score += h;
  }
  return out;
}

}  // namespace occuhet
