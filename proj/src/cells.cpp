#include "occuhet/cells.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace occuhet {

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_positive(const FrequencyTable& freq) {
  return freq.m_plus() > 0 ? freq.total_positive() / static_cast<double>(freq.m_plus()) : 0.0;
}

double variance_positive(const FrequencyTable& freq) {
  const double mean = mean_positive(freq);
  double ss = 0.0;
  for (const auto& [k, m] : freq.counts())
    if (k > 0) ss += static_cast<double>(m) * (k - mean) * (k - mean);
  return freq.m_plus() > 1 ? ss / static_cast<double>(freq.m_plus() - 1) : 0.0;
}

// Root of lambda / (1 - exp(-lambda)) = target for target > 1.
double truncated_poisson_start(double target) {
  if (!(target > 1.0)) return 0.1;
  auto f = [target](double lambda) { return lambda / -std::expm1(-lambda) - target; };
  return find_root(f, 1e-10, target + 1.0, 1e-10);
}

double sd_from(const Matrix& vcov, Eigen::Index i) {
  return vcov(i, i) >= 0.0 ? std::sqrt(vcov(i, i)) : kNaN;
}

double delta_se(const Vector& jacobian, const Matrix& vcov) {
  const double v = jacobian.dot(vcov * jacobian);
  return v >= 0.0 ? std::sqrt(v) : kNaN;
}

double log_factorial(int k) { return std::lgamma(static_cast<double>(k) + 1.0); }

double log_choose(int n, int k) { return log_factorial(n) - log_factorial(k) - log_factorial(n - k); }

}  // namespace

// ---------------------------------------------------------------------------

double PoissonCells::log_prob(int k, const Vector& theta, Vector* grad) const {
  if (grad) grad->resize(size());
  const double lambda = std::exp(theta[0]);
  if (grad) (*grad)[0] = k - lambda;
  return k * theta[0] - lambda - log_factorial(k);
}

Vector PoissonCells::initial(const FrequencyTable& freq) const {
  return Vector::Constant(1, std::log(truncated_poisson_start(mean_positive(freq))));
}

std::vector<NamedEstimate> PoissonCells::natural(const Vector& theta, const Matrix& vcov) const {
  const double lambda = std::exp(theta[0]);
  return {{"lambda", lambda, lambda * sd_from(vcov, 0)}};
}

// ---------------------------------------------------------------------------

double NegativeBinomialCells::log_prob(int k, const Vector& theta, Vector* grad) const {
  if (grad) grad->resize(size());
  const double mu = std::exp(theta[0]);
  const double kappa = std::exp(theta[1]);
  const double ratio = mu / kappa;
  double log_rising = 0.0;  // sum_{j<k} log((kappa + j) / (kappa + mu))
  double inv_sum = 0.0;     // sum_{j<k} 1 / (kappa + j)
  for (int j = 0; j < k; ++j) {
    log_rising += std::log((kappa + j) / (kappa + mu));
    inv_sum += 1.0 / (kappa + j);
  }
  const double value = log_rising + k * theta[0] - log_factorial(k) - kappa * std::log1p(ratio);
  if (grad) {
    (*grad)[0] = k - mu * (kappa + k) / (kappa + mu);
    (*grad)[1] = kappa * (inv_sum - std::log1p(ratio) + (mu - k) / (kappa + mu));
  }
  return value;
}

Vector NegativeBinomialCells::initial(const FrequencyTable& freq) const {
  const double mean = std::max(mean_positive(freq), 0.5);
  const double var = variance_positive(freq);
  double kappa = var > mean ? mean * mean / (var - mean) : 100.0;
  kappa = std::clamp(kappa, 0.05, 1e4);
  Vector theta(2);
  theta << std::log(mean), std::log(kappa);
  return theta;
}

std::vector<NamedEstimate> NegativeBinomialCells::natural(const Vector& theta,
                                                          const Matrix& vcov) const {
  const double mu = std::exp(theta[0]);
  const double kappa = std::exp(theta[1]);
  return {{"mu", mu, mu * sd_from(vcov, 0)}, {"kappa", kappa, kappa * sd_from(vcov, 1)}};
}

std::optional<std::string> NegativeBinomialCells::boundary(const Vector& theta) const {
  if (!(std::exp(theta[1]) <= kPoissonLimit)) return "poisson_limit";
  return std::nullopt;
}

std::optional<std::pair<double, double>> NegativeBinomialCells::mixing_moments(
    const Vector& theta) const {
  const double mu = std::exp(theta[0]);
  const double kappa = std::exp(theta[1]);
  return std::make_pair(mu, mu * mu / kappa);
}

// ---------------------------------------------------------------------------

FinitePoissonCells::FinitePoissonCells(int components) : components_(components) {
  if (components < 1) throw ValidationError("finite mixture needs at least one component");
}

std::vector<std::string> FinitePoissonCells::names() const {
  std::vector<std::string> out;
  for (int c = 1; c <= components_; ++c) out.push_back("log_lambda[" + std::to_string(c) + "]");
  for (int c = 2; c <= components_; ++c) out.push_back("logit_weight[" + std::to_string(c) + "]");
  return out;
}

std::vector<double> FinitePoissonCells::weights(const Vector& theta) const {
  std::vector<double> eta(static_cast<std::size_t>(components_), 0.0);
  for (int c = 1; c < components_; ++c) eta[static_cast<std::size_t>(c)] = theta[components_ + c - 1];
  const double top = *std::max_element(eta.begin(), eta.end());
  double total = 0.0;
  for (double& e : eta) total += (e = std::exp(e - top));
  for (double& e : eta) e /= total;
  return eta;
}

double FinitePoissonCells::log_prob(int k, const Vector& theta, Vector* grad) const {
  if (grad) grad->resize(size());
  const auto w = weights(theta);
  std::vector<double> log_terms(static_cast<std::size_t>(components_));
  for (int c = 0; c < components_; ++c) {
    const double lambda = std::exp(theta[c]);
    log_terms[static_cast<std::size_t>(c)] =
        std::log(w[static_cast<std::size_t>(c)]) + k * theta[c] - lambda - log_factorial(k);
  }
  const double top = *std::max_element(log_terms.begin(), log_terms.end());
  double total = 0.0;
  for (double t : log_terms) total += std::exp(t - top);
  const double log_p = top + std::log(total);
  if (grad) {
    for (int c = 0; c < components_; ++c) {
      // posterior share of component c given count k
      const double share = std::exp(log_terms[static_cast<std::size_t>(c)] - log_p);
      (*grad)[c] = share * (k - std::exp(theta[c]));
      if (c > 0) (*grad)[components_ + c - 1] = share - w[static_cast<std::size_t>(c)];
    }
  }
  return log_p;
}

Vector FinitePoissonCells::initial(const FrequencyTable& freq) const {
  Vector theta = Vector::Zero(size());
  const double base = truncated_poisson_start(mean_positive(freq));
  for (int c = 0; c < components_; ++c) {
    const double factor =
        components_ == 1 ? 1.0 : 0.5 + static_cast<double>(c) / (components_ - 1);
    theta[c] = std::log(base * factor);
  }
  return theta;
}

Vector FinitePoissonCells::canonical(const Vector& theta) const {
  std::vector<int> order(static_cast<std::size_t>(components_));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return theta[a] < theta[b]; });
  std::vector<double> eta(static_cast<std::size_t>(components_), 0.0);
  for (int c = 1; c < components_; ++c) eta[static_cast<std::size_t>(c)] = theta[components_ + c - 1];
  Vector out(theta.size());
  const double anchor = eta[static_cast<std::size_t>(order[0])];
  for (int c = 0; c < components_; ++c) {
    out[c] = theta[order[static_cast<std::size_t>(c)]];
    if (c > 0) out[components_ + c - 1] = eta[static_cast<std::size_t>(order[static_cast<std::size_t>(c)])] - anchor;
  }
  return out;
}

std::vector<NamedEstimate> FinitePoissonCells::natural(const Vector& theta,
                                                       const Matrix& vcov) const {
  std::vector<NamedEstimate> out;
  for (int c = 0; c < components_; ++c) {
    const double lambda = std::exp(theta[c]);
    out.push_back({"lambda[" + std::to_string(c + 1) + "]", lambda, lambda * sd_from(vcov, c)});
  }
  const auto w = weights(theta);
  for (int c = 0; c < components_; ++c) {
    Vector jac = Vector::Zero(theta.size());
    for (int j = 1; j < components_; ++j)
      jac[components_ + j - 1] = w[static_cast<std::size_t>(c)] * ((c == j ? 1.0 : 0.0) - w[static_cast<std::size_t>(j)]);
    out.push_back({"weight[" + std::to_string(c + 1) + "]", w[static_cast<std::size_t>(c)],
                   delta_se(jac, vcov.topLeftCorner(theta.size(), theta.size()))});
  }
  return out;
}

std::optional<std::string> FinitePoissonCells::boundary(const Vector& theta) const {
  const auto w = weights(theta);
  if (*std::min_element(w.begin(), w.end()) < 1e-8) return "degenerate_component";
  for (int c = 1; c < components_; ++c)
    if (std::abs(theta[c] - theta[c - 1]) < 1e-6) return "merged_components";
  return std::nullopt;
}

std::optional<std::pair<double, double>> FinitePoissonCells::mixing_moments(
    const Vector& theta) const {
  const auto w = weights(theta);
  double mean = 0.0, second = 0.0;
  for (int c = 0; c < components_; ++c) {
    const double lambda = std::exp(theta[c]);
    mean += w[static_cast<std::size_t>(c)] * lambda;
    second += w[static_cast<std::size_t>(c)] * lambda * lambda;
  }
  return std::make_pair(mean, std::max(0.0, second - mean * mean));
}

// ---------------------------------------------------------------------------

BinomialCells::BinomialCells(int visits) : visits_(visits) {
  if (visits < 1) throw ValidationError("number of visits must be positive");
}

double BinomialCells::log_prob(int k, const Vector& theta, Vector* grad) const {
  if (grad) grad->resize(size());
  if (k > visits_) {
    if (grad) grad->setZero();
    return -std::numeric_limits<double>::infinity();
  }
  const double eta = theta[0];
  if (grad) (*grad)[0] = k - visits_ * logistic(eta);
  return log_choose(visits_, k) + k * eta - visits_ * softplus(eta);
}

Vector BinomialCells::initial(const FrequencyTable& freq) const {
  const double mean = mean_positive(freq);
  double p = std::clamp(mean / visits_, 0.05, 0.95);
  if (mean > 1.0 && mean < visits_) {
    auto f = [&](double q) { return visits_ * q / -std::expm1(visits_ * std::log1p(-q)) - mean; };
    p = find_root(f, 1e-10, 1.0 - 1e-10, 1e-12);
  }
  return Vector::Constant(1, logit(p));
}

std::vector<NamedEstimate> BinomialCells::natural(const Vector& theta, const Matrix& vcov) const {
  const double p = logistic(theta[0]);
  return {{"p", p, p * (1.0 - p) * sd_from(vcov, 0)}};
}

// ---------------------------------------------------------------------------

BetaBinomialCells::BetaBinomialCells(int visits) : visits_(visits) {
  if (visits < 1) throw ValidationError("number of visits must be positive");
}

double BetaBinomialCells::log_prob(int k, const Vector& theta, Vector* grad) const {
  if (grad) grad->resize(size());
  if (k > visits_) {
    if (grad) grad->setZero();
    return -std::numeric_limits<double>::infinity();
  }
  const double m = logistic(theta[0]);
  const double s = std::exp(theta[1]);
  const double alpha = m * s;
  const double beta = (1.0 - m) * s;
  // B(k + a, T - k + b) / B(a, b) as two products of ratios near m and 1 - m.
  double value = log_choose(visits_, k);
  double d_alpha = 0.0, d_beta = 0.0, d_s = 0.0;
  for (int j = 0; j < k; ++j) {
    value += std::log((alpha + j) / (s + j));
    d_alpha += 1.0 / (alpha + j);
  }
  for (int j = 0; j < visits_ - k; ++j) {
    value += std::log((beta + j) / (s + k + j));
    d_beta += 1.0 / (beta + j);
  }
  for (int j = 0; j < visits_; ++j) d_s += 1.0 / (s + j);
  if (grad) {
    (*grad)[0] = s * m * (1.0 - m) * (d_alpha - d_beta);
    (*grad)[1] = s * (m * d_alpha + (1.0 - m) * d_beta - d_s);
  }
  return value;
}

Vector BetaBinomialCells::initial(const FrequencyTable& freq) const {
  const BinomialCells binomial(visits_);
  Vector theta(2);
  theta << binomial.initial(freq)[0], std::log(5.0);
  return theta;
}

std::vector<NamedEstimate> BetaBinomialCells::natural(const Vector& theta,
                                                      const Matrix& vcov) const {
  const double m = logistic(theta[0]);
  const double s = std::exp(theta[1]);
  const Matrix v = vcov.topLeftCorner(2, 2);
  Vector j_alpha(2), j_beta(2);
  j_alpha << s * m * (1.0 - m), m * s;
  j_beta << -s * m * (1.0 - m), (1.0 - m) * s;
  return {{"mean_p", m, m * (1.0 - m) * sd_from(vcov, 0)},
          {"precision", s, s * sd_from(vcov, 1)},
          {"alpha", m * s, delta_se(j_alpha, v)},
          {"beta", (1.0 - m) * s, delta_se(j_beta, v)}};
}

std::optional<std::string> BetaBinomialCells::boundary(const Vector& theta) const {
  if (!(std::exp(theta[1]) <= kBinomialLimit)) return "binomial_limit";
  const double m = logistic(theta[0]);
  const double s = std::exp(theta[1]);
  if (m * s < 1e-6 || (1.0 - m) * s < 1e-6) return "beta_shape_boundary";
  return std::nullopt;
}

std::optional<std::pair<double, double>> BetaBinomialCells::mixing_moments(
    const Vector& theta) const {
  const double m = logistic(theta[0]);
  const double s = std::exp(theta[1]);
  return std::make_pair(m, m * (1.0 - m) / (s + 1.0));
}

std::unique_ptr<CellModel> make_cell_model(Family family, const MixtureChoice& mixture,
                                           int visits) {
  if (family == Family::poisson) {
    switch (mixture.kind) {
      case MixtureKind::none: return std::make_unique<PoissonCells>();
      case MixtureKind::gamma: return std::make_unique<NegativeBinomialCells>();
      case MixtureKind::finite: return std::make_unique<FinitePoissonCells>(mixture.components);
      case MixtureKind::beta: break;
    }
    throw ValidationError("beta mixture applies to the binomial family only");
  }
  switch (mixture.kind) {
    case MixtureKind::none: return std::make_unique<BinomialCells>(visits);
    case MixtureKind::beta: return std::make_unique<BetaBinomialCells>(visits);
    default: break;
  }
  throw ValidationError("mixture '" + to_string(mixture) + "' applies to the poisson family only");
}

}  // namespace occuhet
