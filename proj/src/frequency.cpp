#include "occuhet/cells.hpp"

#include <algorithm>
#include <cmath>

namespace occuhet {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct FrequencyLikelihood {
  const CellModel& cells;
  std::vector<std::pair<int, double>> positive;  // (k, m_k), k >= 1
  double n = 0.0;
  double m_plus = 0.0;
  double m_zero = 0.0;

  FrequencyLikelihood(const FrequencyTable& freq, const CellModel& model) : cells(model) {
    for (const auto& [k, m] : freq.counts())
      if (k > 0) positive.emplace_back(k, static_cast<double>(m));
    n = static_cast<double>(freq.n());
    m_plus = static_cast<double>(freq.m_plus());
    m_zero = static_cast<double>(freq.m_zero());
  }

  int p() const { return cells.size(); }

  // Sum_k m_k log p_k over k >= 1 with gradient.
  double positive_part(const Vector& theta, Vector* grad) const {
    double value = 0.0;
    Vector gk(p());
    if (grad) grad->setZero(p());
    for (const auto& [k, m] : positive) {
      value += m * cells.log_prob(k, theta, grad ? &gk : nullptr);
      if (grad) *grad += m * gk;
    }
    return value;
  }

  // p0, p+ and the gradient of p+.
  void zero_cell(const Vector& theta, double& p0, double& p_plus, Vector* grad_p_plus) const {
    Vector g0(p());
    const double log_p0 = cells.log_prob(0, theta, grad_p_plus ? &g0 : nullptr);
    p0 = std::exp(log_p0);
    p_plus = -std::expm1(log_p0);
    if (grad_p_plus) *grad_p_plus = -p0 * g0;
  }

  double conditional(const Vector& theta) const {
    double p0 = 0.0, p_plus = 0.0;
    zero_cell(theta, p0, p_plus, nullptr);
    return positive_part(theta, nullptr) - m_plus * std::log(p_plus);
  }

  Vector conditional_gradient(const Vector& theta) const {
    Vector g;
    positive_part(theta, &g);
    double p0 = 0.0, p_plus = 0.0;
    Vector dp(p());
    zero_cell(theta, p0, p_plus, &dp);
    return g - (m_plus / p_plus) * dp;
  }

  // Full log-likelihood in (theta, psi).
  double full(const Vector& theta, double psi) const {
    double p0 = 0.0, p_plus = 0.0;
    zero_cell(theta, p0, p_plus, nullptr);
    double value = positive_part(theta, nullptr) + m_plus * std::log(psi);
    if (m_zero > 0.0) value += m_zero * std::log1p(-psi * p_plus);
    return value;
  }

  // Gradient in (theta, psi) on the natural psi scale.
  Vector full_gradient(const Vector& theta, double psi) const {
    Vector g(p() + 1);
    Vector gt;
    positive_part(theta, &gt);
    double p0 = 0.0, p_plus = 0.0;
    Vector dp(p());
    zero_cell(theta, p0, p_plus, &dp);
    const double q = 1.0 - psi * p_plus;
    g.head(p()) = gt;
    g[p()] = m_plus / psi;
    if (m_zero > 0.0) {
      g.head(p()) -= (m_zero * psi / q) * dp;
      g[p()] -= m_zero * p_plus / q;
    }
    return g;
  }
};

Vector join(const Vector& theta, double last) {
  Vector out(theta.size() + 1);
  out << theta, last;
  return out;
}

}  // namespace

FitResult fit_frequency_model(const FrequencyTable& freq, const CellModel& cells, Method method,
                              const FrequencyFitOptions& options) {
  if (freq.n() == 0) throw ValidationError("frequency table is empty");
  if (freq.m_plus() == 0) throw ValidationError("presence unidentifiable: no site has a detection");
  if (cells.max_count() && freq.max_count() > *cells.max_count())
    throw ValidationError("count exceeds the number of visits");

  const FrequencyLikelihood lik(freq, cells);
  const int p = cells.size();

  FitResult fit;
  fit.family = cells.family();
  fit.method = method;
  fit.mixture = cells.mixture();
  fit.visits = cells.max_count().value_or(1);
  fit.n = freq.n();
  fit.detected = freq.m_plus();
  fit.n_detection = p;
  fit.names = cells.names();
  fit.names.push_back("psi");

  // Conditional stage: detection parameters from the zero-truncated likelihood.
  const Vector start = options.detection_start.value_or(cells.initial(freq));
  const OptimResult cl = maximize([&](const Vector& t) { return lik.conditional(t); },
                                  [&](const Vector& t) { return lik.conditional_gradient(t); },
                                  start, options.optim);
  const Vector theta_c = cells.canonical(cl.argmax);
  double p0 = 0.0, p_plus = 0.0;
  Vector dp(p);
  lik.zero_cell(theta_c, p0, p_plus, &dp);
  const double psi_c = lik.m_plus / (lik.n * p_plus);

  Vector theta;
  double psi = 0.0;
  if (method == Method::cl) {
    const Matrix h1 = hessian_from_gradient(
        [&](const Vector& t) { return lik.conditional_gradient(t); }, theta_c);
    bool singular = false;
    const Matrix v_theta = covariance_from_hessian(h1, &singular);
    if (singular) fit.notes.push_back("singular_information");
    // psi = m+ / (n p+(theta)): binomial sampling term plus delta propagation.
    const Vector jac = -(psi_c / p_plus) * dp;
    const double var_psi =
        psi_c * (1.0 - psi_c * p_plus) / (lik.n * p_plus) + jac.dot(v_theta * jac);
    fit.vcov = Matrix::Zero(p + 1, p + 1);
    fit.vcov.topLeftCorner(p, p) = v_theta;
    fit.vcov.block(0, p, p, 1) = v_theta * jac;
    fit.vcov.block(p, 0, 1, p) = (v_theta * jac).transpose();
    fit.vcov(p, p) = var_psi;
    theta = theta_c;
    psi = psi_c;
    fit.converged = cl.converged;
    fit.iterations = cl.iterations;
    fit.gradient_norm = cl.gradient_norm;
    fit.psi_boundary = psi_c >= 1.0;
    fit.conditional_loglik = lik.conditional(theta_c);
  } else {
    const double naive = std::clamp(lik.m_plus / lik.n, 1e-6, 1.0 - 1e-6);
    auto split = [p](const Vector& w) { return std::make_pair(Vector(w.head(p)), logistic(w[p])); };
    auto objective = [&](const Vector& w) {
      const auto [t, ps] = split(w);
      return lik.full(t, ps);
    };
    auto gradient = [&](const Vector& w) {
      const auto [t, ps] = split(w);
      Vector g = lik.full_gradient(t, ps);
      g[p] *= ps * (1.0 - ps);
      return g;
    };
    const OptimResult ml = maximize(objective, gradient, join(theta_c, logit(naive)), options.optim);
    theta = cells.canonical(ml.argmax.head(p));
    psi = logistic(ml.argmax[p]);
    fit.converged = ml.converged;
    fit.iterations = ml.iterations;
    fit.gradient_norm = ml.gradient_norm;
    fit.psi_boundary = psi > 1.0 - 1e-6;

    Matrix h;
    try {
      h = hessian_from_gradient(
          [&](const Vector& w) { return lik.full_gradient(w.head(p), w[p]); }, join(theta, psi));
    } catch (const NumericalError&) {
      h = Matrix::Constant(p + 1, p + 1, kNaN);
    }
    if (h.allFinite()) {
      bool singular = false;
      fit.vcov = covariance_from_hessian(h, &singular);
      if (singular) fit.notes.push_back("singular_information");
    } else {
      fit.vcov = Matrix::Constant(p + 1, p + 1, kNaN);
    }
    lik.zero_cell(theta, p0, p_plus, &dp);
  }

  fit.estimate = join(theta, psi);
  fit.psi_hat = psi;
  fit.psi_se = fit.vcov(p, p) >= 0.0 ? std::sqrt(fit.vcov(p, p)) : kNaN;
  fit.loglik = lik.full(theta, psi);
  fit.aic = -2.0 * fit.loglik + 2.0 * (p + 1);
  if (auto reason = cells.boundary(theta)) {
    fit.detection_boundary = true;
    fit.notes.push_back(*reason);
  }

  fit.derived = cells.natural(theta, fit.vcov.topLeftCorner(p, p));
  {
    const Vector jac = dp;
    const double v = jac.dot(fit.vcov.topLeftCorner(p, p) * jac);
    fit.derived.push_back({"p_plus", p_plus, v >= 0.0 ? std::sqrt(v) : kNaN});
  }
  const int kmax = std::max(freq.max_count(), cells.max_count().value_or(0));
  for (int k = 0; k <= kmax; ++k) fit.cell_probs.push_back(std::exp(cells.log_prob(k, theta, nullptr)));
  return fit;
}

FitResult at_nested_limit(const FitResult& base, const CellModel& mixture_cells,
                          const std::string& reason) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  FitResult fit = base;
  const Eigen::Index k = base.estimate.size();
  fit.mixture = mixture_cells.mixture();
  fit.names = mixture_cells.names();
  fit.names.push_back("psi");
  fit.n_detection = base.n_detection + 1;
  fit.estimate.resize(k + 1);
  fit.estimate << base.estimate[0], kInf, base.estimate.tail(k - 1);
  // index map: base 0 -> 0, base j>0 -> j+1
  fit.vcov = Matrix::Constant(k + 1, k + 1, kNaN);
  auto at = [](Eigen::Index j) { return j == 0 ? j : j + 1; };
  for (Eigen::Index r = 0; r < k; ++r)
    for (Eigen::Index c = 0; c < k; ++c) fit.vcov(at(r), at(c)) = base.vcov(r, c);
  fit.detection_boundary = true;
  fit.notes.push_back(reason);
  fit.aic = -2.0 * fit.loglik + 2.0 * static_cast<double>(k + 1);
  std::vector<NamedEstimate> derived;
  for (const auto& d : base.derived) {
    if (d.name == "p_plus") continue;
    if (d.name == "lambda") derived.push_back({"mu", d.estimate, d.se});
    if (d.name == "p") derived.push_back({"mean_p", d.estimate, d.se});
  }
  derived.push_back({mixture_cells.family() == Family::poisson ? "kappa" : "precision", kInf, kNaN});
  for (const auto& d : base.derived)
    if (d.name == "p_plus") derived.push_back(d);
  fit.derived = derived;
  return fit;
}

FitResult vanishing_detection_fit(const FrequencyTable& freq, const CellModel& cells,
                                  Method method) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const int p = cells.size();
  FitResult fit;
  fit.family = cells.family();
  fit.method = method;
  fit.mixture = cells.mixture();
  fit.visits = cells.max_count().value_or(1);
  fit.n = freq.n();
  fit.detected = freq.m_plus();
  fit.n_detection = p;
  fit.names = cells.names();
  fit.names.push_back("psi");
  fit.estimate = Vector::Constant(p + 1, kNaN);
  fit.estimate[0] = -kInf;
  fit.estimate[p] = kInf;
  fit.vcov = Matrix::Constant(p + 1, p + 1, kNaN);
  fit.psi_hat = kInf;
  fit.psi_se = kNaN;
  const double n = static_cast<double>(freq.n());
  const double m_plus = static_cast<double>(freq.m_plus());
  const double m_zero = static_cast<double>(freq.m_zero());
  fit.loglik = m_plus * std::log(m_plus / n) + (m_zero > 0.0 ? m_zero * std::log(m_zero / n) : 0.0);
  fit.aic = -2.0 * fit.loglik + 2.0 * (p + 1);
  if (method == Method::cl) fit.conditional_loglik = 0.0;
  fit.converged = false;
  fit.psi_boundary = true;
  fit.detection_boundary = true;
  fit.notes.push_back("vanishing_detection");
  fit.derived.push_back({"p_plus", 0.0, kNaN});
  fit.cell_probs.assign(static_cast<std::size_t>(std::max(1, cells.max_count().value_or(1)) + 1), 0.0);
  fit.cell_probs[0] = 1.0;
  return fit;
}

void flag_insufficient_support(FitResult& fit) {
  fit.converged = false;
  fit.notes.push_back("insufficient_support");
}

}  // namespace occuhet
