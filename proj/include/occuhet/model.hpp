#pragma once

#include "occuhet/data.hpp"
#include "occuhet/fit.hpp"

#include <string>

namespace occuhet {

struct ModelSpec {
  std::string detection = "1";
  std::string occurrence = "1";
  MixtureChoice mixture;
  Method method = Method::ml;
};

/// Dispatches to the frequency-table fitters for intercept-only models and
/// mixtures, and to the regression fitter otherwise.
FitResult fit_model(const Dataset& dataset, const ModelSpec& spec, const OptimOptions& options = {});

}  // namespace occuhet
