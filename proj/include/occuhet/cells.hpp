#pragma once

#include "occuhet/fit.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace occuhet {

/// Marginal count distribution p_k(theta) of an occupied site, on a working
/// (unconstrained) parameter scale with analytic gradients.
class CellModel {
 public:
  virtual ~CellModel() = default;

  virtual int size() const = 0;
  virtual std::vector<std::string> names() const = 0;
  virtual Family family() const = 0;
  virtual MixtureChoice mixture() const = 0;
  /// Largest attainable count (T for binomial models).
  virtual std::optional<int> max_count() const { return std::nullopt; }

  /// log p_k(theta); writes d log p_k / d theta into `grad` when non-null.
  virtual double log_prob(int k, const Vector& theta, Vector* grad) const = 0;

  virtual Vector initial(const FrequencyTable& freq) const = 0;
  /// Canonical representative of theta (mixture label ordering).
  virtual Vector canonical(const Vector& theta) const { return theta; }
  /// Natural-scale summaries with delta-method standard errors.
  virtual std::vector<NamedEstimate> natural(const Vector& theta, const Matrix& vcov) const = 0;
  /// Reason the fitted theta sits on the parameter-space boundary, if any.
  virtual std::optional<std::string> boundary(const Vector& theta) const {
    (void)theta;
    return std::nullopt;
  }
  /// Mean and variance of the mixing distribution, when defined.
  virtual std::optional<std::pair<double, double>> mixing_moments(const Vector& theta) const {
    (void)theta;
    return std::nullopt;
  }
};

/// Homogeneous Poisson: theta = (log lambda).
class PoissonCells final : public CellModel {
 public:
  int size() const override { return 1; }
  std::vector<std::string> names() const override { return {"log_lambda"}; }
  Family family() const override { return Family::poisson; }
  MixtureChoice mixture() const override { return {}; }
  double log_prob(int k, const Vector& theta, Vector* grad) const override;
  Vector initial(const FrequencyTable& freq) const override;
  std::vector<NamedEstimate> natural(const Vector& theta, const Matrix& vcov) const override;
};

/// Gamma-mixed Poisson, NB(kappa, mu/kappa): theta = (log mu, log kappa).
class NegativeBinomialCells final : public CellModel {
 public:
  static constexpr double kPoissonLimit = 1e6;

  int size() const override { return 2; }
  std::vector<std::string> names() const override { return {"log_mu", "log_kappa"}; }
  Family family() const override { return Family::poisson; }
  MixtureChoice mixture() const override { return {MixtureKind::gamma, 1}; }
  double log_prob(int k, const Vector& theta, Vector* grad) const override;
  Vector initial(const FrequencyTable& freq) const override;
  std::vector<NamedEstimate> natural(const Vector& theta, const Matrix& vcov) const override;
  std::optional<std::string> boundary(const Vector& theta) const override;
  std::optional<std::pair<double, double>> mixing_moments(const Vector& theta) const override;
};

/// C-component Poisson mixture: theta = (log lambda_1..C, eta_2..C) with
/// weights softmax(0, eta_2, ..., eta_C). Canonical order is increasing lambda.
class FinitePoissonCells final : public CellModel {
 public:
  explicit FinitePoissonCells(int components);

  int size() const override { return 2 * components_ - 1; }
  std::vector<std::string> names() const override;
  Family family() const override { return Family::poisson; }
  MixtureChoice mixture() const override { return {MixtureKind::finite, components_}; }
  double log_prob(int k, const Vector& theta, Vector* grad) const override;
  Vector initial(const FrequencyTable& freq) const override;
  Vector canonical(const Vector& theta) const override;
  std::vector<NamedEstimate> natural(const Vector& theta, const Matrix& vcov) const override;
  std::optional<std::string> boundary(const Vector& theta) const override;
  std::optional<std::pair<double, double>> mixing_moments(const Vector& theta) const override;

  int components() const { return components_; }
  std::vector<double> weights(const Vector& theta) const;

 private:
  int components_;
};

/// Binomial(T, p): theta = (logit p).
class BinomialCells final : public CellModel {
 public:
  explicit BinomialCells(int visits);

  int size() const override { return 1; }
  std::vector<std::string> names() const override { return {"logit_p"}; }
  Family family() const override { return Family::binomial; }
  MixtureChoice mixture() const override { return {}; }
  std::optional<int> max_count() const override { return visits_; }
  double log_prob(int k, const Vector& theta, Vector* grad) const override;
  Vector initial(const FrequencyTable& freq) const override;
  std::vector<NamedEstimate> natural(const Vector& theta, const Matrix& vcov) const override;

 private:
  int visits_;
};

/// Beta-binomial(T, alpha, beta) with alpha = m s, beta = (1 - m) s:
/// theta = (logit m, log s).
class BetaBinomialCells final : public CellModel {
 public:
  static constexpr double kBinomialLimit = 1e6;

  explicit BetaBinomialCells(int visits);

  int size() const override { return 2; }
  std::vector<std::string> names() const override { return {"logit_mean", "log_precision"}; }
  Family family() const override { return Family::binomial; }
  MixtureChoice mixture() const override { return {MixtureKind::beta, 1}; }
  std::optional<int> max_count() const override { return visits_; }
  double log_prob(int k, const Vector& theta, Vector* grad) const override;
  Vector initial(const FrequencyTable& freq) const override;
  std::vector<NamedEstimate> natural(const Vector& theta, const Matrix& vcov) const override;
  std::optional<std::string> boundary(const Vector& theta) const override;
  std::optional<std::pair<double, double>> mixing_moments(const Vector& theta) const override;

 private:
  int visits_;
};

std::unique_ptr<CellModel> make_cell_model(Family family, const MixtureChoice& mixture, int visits);

/// Options shared by the frequency-table fitters.
struct FrequencyFitOptions {
  OptimOptions optim;
  /// Detection start for the conditional stage; the model's own guess if empty.
  std::optional<Vector> detection_start;
};

/// Fits the zero-inflated model prod_k p_k^m_k psi^m+ {1 - psi p+}^m0 by full
/// likelihood (ML) or by the two-stage conditional likelihood (CL).
FitResult fit_frequency_model(const FrequencyTable& freq, const CellModel& cells, Method method,
                              const FrequencyFitOptions& options = {});

/// Re-expresses a homogeneous fit as the limiting point of a two-parameter
/// mixture (dispersion or precision at +infinity), flagged with `reason`.
FitResult at_nested_limit(const FitResult& base, const CellModel& mixture_cells,
                          const std::string& reason);

/// Limit fit when every detected site has count one: the detection intensity
/// tends to zero while psi p+ stays at m+/n, so psi diverges.
FitResult vanishing_detection_fit(const FrequencyTable& freq, const CellModel& cells,
                                  Method method);

/// Marks a fit as not identified from the available support.
void flag_insufficient_support(FitResult& fit);

// Scalar helpers shared across modules.
double logistic(double x);
double logit(double p);
/// log(1 + exp(x)) without overflow.
double softplus(double x);

}  // namespace occuhet
