#pragma once

#include "occuhet/data.hpp"
#include "occuhet/optim.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace occuhet {

enum class Method { ml, cl };

std::string to_string(Method method);
Method parse_method(const std::string& text);

enum class MixtureKind { none, gamma, finite, beta };

/// Detection mixture selector; `components` is used by the finite kind.
struct MixtureChoice {
  MixtureKind kind = MixtureKind::none;
  int components = 1;
};

std::string to_string(const MixtureChoice& mixture);
/// Accepts none | gamma | beta | finite:C.
MixtureChoice parse_mixture(const std::string& text);

struct NamedEstimate {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
};

/// Result of one zero-inflated model fit.
///
/// `estimate`/`vcov` hold the joint parameter vector: detection parameters on
/// their working scale (log intensity, logit probability, regression
/// coefficients, mixture parameters) followed by the occurrence block, which is
/// the natural-scale psi for a constant presence probability and the logistic
/// coefficients gamma otherwise.
struct FitResult {
  Family family = Family::poisson;
  Method method = Method::ml;
  MixtureChoice mixture;
  std::string detection_formula = "1";
  std::string occurrence_formula = "1";
  int visits = 1;
  long n = 0;
  long detected = 0;

  std::vector<std::string> names;
  Vector estimate;
  Matrix vcov;
  int n_detection = 0;

  /// Constant presence probability, or the site average of fitted psi_i.
  double psi_hat = 0.0;
  double psi_se = 0.0;
  bool occurrence_regression = false;

  std::vector<NamedEstimate> derived;
  std::vector<double> cell_probs;

  double loglik = 0.0;
  /// Log of the detection-stage conditional likelihood (CL fits only).
  double conditional_loglik = 0.0;
  double aic = 0.0;

  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  bool psi_boundary = false;
  bool detection_boundary = false;
  std::vector<std::string> notes;

  Vector theta() const { return estimate.head(n_detection); }
  Matrix theta_vcov() const { return vcov.topLeftCorner(n_detection, n_detection); }
  Vector standard_errors() const;
  bool flagged() const { return !converged || psi_boundary || detection_boundary; }
};

nlohmann::json to_json(const FitResult& fit);

/// JSON number, or null for non-finite values.
nlohmann::json json_number(double value);

}  // namespace occuhet
