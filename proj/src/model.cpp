#include "occuhet/model.hpp"

#include "occuhet/regression.hpp"
#include "occuhet/zib.hpp"
#include "occuhet/zip.hpp"

namespace occuhet {

FitResult fit_model(const Dataset& dataset, const ModelSpec& spec, const OptimOptions& options) {
  const Formula det = Formula::parse(spec.detection);
  const Formula occ = Formula::parse(spec.occurrence);
  const bool poisson = dataset.family() == Family::poisson;
  if (spec.mixture.kind != MixtureKind::none) {
    if (!(det.intercept_only() && occ.intercept_only()))
      throw ValidationError("mixtures apply to intercept-only models");
    const FrequencyTable freq = aggregate(dataset);
    if (poisson) return fit_zip_mixture(freq, spec.mixture, spec.method, options);
    if (spec.mixture.kind != MixtureKind::beta)
      throw ValidationError("binomial detection supports the beta mixture only");
    return fit_zib_mixture(freq, dataset.visits(), spec.method, options);
  }
  if (det.intercept_only() && occ.intercept_only()) {
    const FrequencyTable freq = aggregate(dataset);
    return poisson ? fit_zip_homogeneous(freq, spec.method, options)
                   : fit_zib_homogeneous(freq, dataset.visits(), spec.method, options);
  }
  return poisson ? fit_zip_regression(dataset, det, occ, spec.method, options)
                 : fit_zib_regression(dataset, det, occ, spec.method, options);
}

}  // namespace occuhet
