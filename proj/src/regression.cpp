#include "occuhet/regression.hpp"

#include "occuhet/cells.hpp"

#include <algorithm>
#include <cmath>

namespace occuhet {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double log_choose(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

void require_full_rank(const Matrix& x, const std::string& what) {
  if (x.rows() < x.cols()) throw ValidationError("rank deficient " + what + " (too few sites)");
  Eigen::ColPivHouseholderQR<Matrix> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < x.cols()) throw ValidationError("rank deficient " + what);
}

struct RegressionModel {
  DetectionLink link;
  Matrix x;
  Matrix z;
  std::vector<int> y;
  std::vector<Eigen::Index> detected;
  std::vector<Eigen::Index> undetected;

  Eigen::Index p() const { return x.cols(); }
  Eigen::Index q() const { return z.cols(); }
  double n() const { return static_cast<double>(y.size()); }
  double m_plus() const { return static_cast<double>(detected.size()); }

  // Zero-truncated likelihood over detected sites.
  double conditional(const Vector& theta) const {
    double value = 0.0;
    for (auto i : detected) {
      const double eta = x.row(i).dot(theta);
      value += link.log_density(y[static_cast<std::size_t>(i)], eta) - link.log_pi(eta);
    }
    return value;
  }

  Vector conditional_gradient(const Vector& theta) const {
    Vector g = Vector::Zero(p());
    for (auto i : detected) {
      const double eta = x.row(i).dot(theta);
      const double w = link.score(y[static_cast<std::size_t>(i)], eta) - link.dpi(eta) / link.pi(eta);
      g += w * x.row(i).transpose();
    }
    return g;
  }

  // log(1 - psi pi) from the complements, stable for psi or pi near one.
  double log_miss(double zeta, double eta) const {
    const double psi = logistic(zeta);
    return std::log(logistic(-zeta) + psi * (1.0 - link.pi(eta)));
  }

  // Joint likelihood in (theta, gamma).
  double full(const Vector& theta, const Vector& gamma) const {
    double value = 0.0;
    for (auto i : detected) {
      const double zeta = z.row(i).dot(gamma);
      value += -softplus(-zeta) + link.log_density(y[static_cast<std::size_t>(i)], x.row(i).dot(theta));
    }
    for (auto i : undetected) value += log_miss(z.row(i).dot(gamma), x.row(i).dot(theta));
    return value;
  }

  Vector full_gradient(const Vector& theta, const Vector& gamma) const {
    Vector g = Vector::Zero(p() + q());
    for (auto i : detected) {
      const double eta = x.row(i).dot(theta);
      const double zeta = z.row(i).dot(gamma);
      g.head(p()) += link.score(y[static_cast<std::size_t>(i)], eta) * x.row(i).transpose();
      g.tail(q()) += logistic(-zeta) * z.row(i).transpose();
    }
    for (auto i : undetected) {
      const double eta = x.row(i).dot(theta);
      const double zeta = z.row(i).dot(gamma);
      const double psi = logistic(zeta);
      const double pi = link.pi(eta);
      const double miss = logistic(-zeta) + psi * (1.0 - pi);
      g.head(p()) -= (psi * link.dpi(eta) / miss) * x.row(i).transpose();
      g.tail(q()) -= (pi * psi * logistic(-zeta) / miss) * z.row(i).transpose();
    }
    return g;
  }

  // Joint likelihood gradient in (theta, psi) for a constant presence probability.
  Vector constant_psi_gradient(const Vector& theta, double psi) const {
    Vector g = Vector::Zero(p() + 1);
    for (auto i : detected) {
      const double eta = x.row(i).dot(theta);
      g.head(p()) += link.score(y[static_cast<std::size_t>(i)], eta) * x.row(i).transpose();
    }
    g[p()] = m_plus() / psi;
    for (auto i : undetected) {
      const double eta = x.row(i).dot(theta);
      const double pi = link.pi(eta);
      const double miss = 1.0 - psi * pi;
      g.head(p()) -= (psi * link.dpi(eta) / miss) * x.row(i).transpose();
      g[p()] -= pi / miss;
    }
    return g;
  }

  // Presence-stage likelihood in gamma with detection fixed (pi per site).
  double presence(const Vector& gamma, const std::vector<double>& pi) const {
    double value = 0.0;
    for (auto i : detected) value += -softplus(-z.row(i).dot(gamma)) + std::log(pi[static_cast<std::size_t>(i)]);
    for (auto i : undetected) {
      const double zeta = z.row(i).dot(gamma);
      value += std::log(logistic(-zeta) + logistic(zeta) * (1.0 - pi[static_cast<std::size_t>(i)]));
    }
    return value;
  }

  Vector presence_gradient(const Vector& gamma, const std::vector<double>& pi) const {
    Vector g = Vector::Zero(q());
    for (auto i : detected) g += logistic(-z.row(i).dot(gamma)) * z.row(i).transpose();
    for (auto i : undetected) {
      const double zeta = z.row(i).dot(gamma);
      const double psi = logistic(zeta);
      const double p_i = pi[static_cast<std::size_t>(i)];
      const double miss = logistic(-zeta) + psi * (1.0 - p_i);
      g -= (p_i * psi * logistic(-zeta) / miss) * z.row(i).transpose();
    }
    return g;
  }

  std::vector<double> site_pi(const Vector& theta) const {
    std::vector<double> pi(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) pi[i] = link.pi(x.row(static_cast<Eigen::Index>(i)).dot(theta));
    return pi;
  }
};

double sqrt_or_nan(double v) { return v >= 0.0 ? std::sqrt(v) : kNaN; }

}  // namespace

// ---------------------------------------------------------------------------

DetectionLink::DetectionLink(Family family, int visits) : family_(family), visits_(visits) {
  if (visits < 1) throw ValidationError("number of visits must be positive");
}

double DetectionLink::intensity(double eta) const {
  return family_ == Family::poisson ? std::exp(eta) : logistic(eta);
}

double DetectionLink::log_density(int y, double eta) const {
  if (family_ == Family::poisson) return y * eta - std::exp(eta) - std::lgamma(y + 1.0);
  if (y > visits_) return -std::numeric_limits<double>::infinity();
  return log_choose(visits_, y) + y * eta - visits_ * softplus(eta);
}

double DetectionLink::score(int y, double eta) const {
  return family_ == Family::poisson ? y - std::exp(eta) : y - visits_ * logistic(eta);
}

double DetectionLink::pi(double eta) const {
  return family_ == Family::poisson ? -std::expm1(-std::exp(eta))
                                    : -std::expm1(-visits_ * softplus(eta));
}

double DetectionLink::log_pi(double eta) const { return std::log(pi(eta)); }

double DetectionLink::dpi(double eta) const {
  if (family_ == Family::poisson) {
    const double lambda = std::exp(eta);
    return lambda * std::exp(-lambda);
  }
  return visits_ * logistic(eta) * std::exp(-visits_ * softplus(eta));
}

double psi_root_equation(double psi, long m_plus, const std::vector<double>& pi_undetected) {
  double value = static_cast<double>(m_plus) / psi;
  for (double pi : pi_undetected) value -= pi / (1.0 - psi * pi);
  return value;
}

double solve_psi_root(long m_plus, const std::vector<double>& pi_undetected, bool* at_boundary) {
  auto f = [&](double psi) { return psi_root_equation(psi, m_plus, pi_undetected); };
  constexpr double lo = 1e-12;
  constexpr double hi = 1.0 - 1e-12;
  const bool boundary = f(hi) > 0.0;
  if (at_boundary) *at_boundary = boundary;
  if (boundary) return 1.0;
  return find_root(f, lo, hi, 1e-10);
}

// ---------------------------------------------------------------------------

FitResult fit_regression(const Dataset& dataset, const Formula& detection,
                         const Formula& occurrence, Method method, const OptimOptions& options) {
  RegressionModel model{DetectionLink(dataset.family(), dataset.visits()), detection.design(dataset),
                        occurrence.design(dataset), dataset.y(), {}, {}};
  for (std::size_t i = 0; i < model.y.size(); ++i)
    (model.y[i] > 0 ? model.detected : model.undetected).push_back(static_cast<Eigen::Index>(i));
  if (model.detected.empty())
    throw ValidationError("presence unidentifiable: no site has a detection");
  if (dataset.family() == Family::binomial && dataset.visits() < 2 &&
      (detection.intercept_only() || occurrence.intercept_only()))
    throw ValidationError("psi and p jointly unidentifiable with a single visit");

  Matrix x_detected(static_cast<Eigen::Index>(model.detected.size()), model.p());
  for (std::size_t r = 0; r < model.detected.size(); ++r)
    x_detected.row(static_cast<Eigen::Index>(r)) = model.x.row(model.detected[r]);
  require_full_rank(x_detected, "detection design on detected sites");
  require_full_rank(model.z, "occurrence design");

  const Eigen::Index p = model.p();
  const Eigen::Index q = model.q();
  const bool constant_psi = occurrence.intercept_only();

  FitResult fit;
  fit.family = dataset.family();
  fit.method = method;
  fit.detection_formula = detection.str();
  fit.occurrence_formula = occurrence.str();
  fit.visits = dataset.visits();
  fit.n = static_cast<long>(dataset.size());
  fit.detected = static_cast<long>(model.detected.size());
  fit.n_detection = static_cast<int>(p);
  fit.occurrence_regression = !constant_psi;
  for (const auto& label : detection.labels()) fit.names.push_back("det:" + label);
  if (constant_psi) {
    fit.names.push_back("psi");
  } else {
    for (const auto& label : occurrence.labels()) fit.names.push_back("occ:" + label);
  }

  // Conditional stage for theta.
  Vector theta_start = Vector::Zero(p);
  theta_start[0] = make_cell_model(dataset.family(), {}, dataset.visits())->initial(aggregate(dataset))[0];
  const OptimResult cl = maximize([&](const Vector& t) { return model.conditional(t); },
                                  [&](const Vector& t) { return model.conditional_gradient(t); },
                                  theta_start, options);
  const Vector theta_c = cl.argmax;
  std::vector<double> pi_c = model.site_pi(theta_c);
  std::vector<double> pi_undetected;
  for (auto i : model.undetected) pi_undetected.push_back(pi_c[static_cast<std::size_t>(i)]);
  bool root_boundary = false;
  const double psi_root = solve_psi_root(fit.detected, pi_undetected, &root_boundary);

  auto psi_bar_of = [&](const Vector& gamma, const Matrix& v_gamma, double& se) {
    double mean = 0.0;
    Vector grad = Vector::Zero(q);
    for (Eigen::Index i = 0; i < model.z.rows(); ++i) {
      const double psi = logistic(model.z.row(i).dot(gamma));
      mean += psi;
      grad += psi * (1.0 - psi) * model.z.row(i).transpose();
    }
    mean /= model.n();
    grad /= model.n();
    se = sqrt_or_nan(grad.dot(v_gamma * grad));
    return mean;
  };

  Vector estimate(p + q);
  if (method == Method::cl) {
    const Matrix h1 = hessian_from_gradient(
        [&](const Vector& t) { return model.conditional_gradient(t); }, theta_c);
    bool singular = false;
    const Matrix v_theta = covariance_from_hessian(h1, &singular);
    if (singular) fit.notes.push_back("singular_information");
    fit.vcov = Matrix::Zero(p + q, p + q);
    fit.vcov.topLeftCorner(p, p) = v_theta;
    fit.conditional_loglik = model.conditional(theta_c);
    fit.converged = cl.converged;
    fit.iterations = cl.iterations;
    fit.gradient_norm = cl.gradient_norm;

    if (constant_psi) {
      const double psi = psi_root;
      double info = model.m_plus() / (psi * psi);
      Vector cross = Vector::Zero(p);
      for (auto i : model.undetected) {
        const double eta = model.x.row(i).dot(theta_c);
        const double pi = pi_c[static_cast<std::size_t>(i)];
        const double miss = 1.0 - psi * pi;
        info += pi * pi / (miss * miss);
        cross -= (model.link.dpi(eta) / (miss * miss)) * model.x.row(i).transpose();
      }
      const Vector jac = cross / info;  // d psi / d theta through the root equation
      fit.vcov.block(0, p, p, 1) = v_theta * jac;
      fit.vcov.block(p, 0, 1, p) = (v_theta * jac).transpose();
      fit.vcov(p, p) = 1.0 / info + jac.dot(v_theta * jac);
      estimate << theta_c, psi;
      fit.psi_hat = psi;
      fit.psi_se = sqrt_or_nan(fit.vcov(p, p));
      fit.psi_boundary = root_boundary;
      fit.loglik = model.full(theta_c, Vector::Constant(1, root_boundary ? 40.0 : logit(psi)));
    } else {
      Vector gamma_start = Vector::Zero(q);
      gamma_start[0] = logit(std::clamp(psi_root, 0.05, 0.95));
      const OptimResult stage2 =
          maximize([&](const Vector& g) { return model.presence(g, pi_c); },
                   [&](const Vector& g) { return model.presence_gradient(g, pi_c); }, gamma_start,
                   options);
      const Vector gamma = stage2.argmax;
      const Matrix h2 = hessian_from_gradient(
          [&](const Vector& g) { return model.presence_gradient(g, pi_c); }, gamma);
      const Matrix v_gamma0 = covariance_from_hessian(h2, &singular);
      if (singular) fit.notes.push_back("singular_presence_information");
      Matrix cross = Matrix::Zero(q, p);
      for (auto i : model.undetected) {
        const double eta = model.x.row(i).dot(theta_c);
        const double zeta = model.z.row(i).dot(gamma);
        const double psi = logistic(zeta);
        const double miss = 1.0 - psi * pi_c[static_cast<std::size_t>(i)];
        cross -= (psi * (1.0 - psi) * model.link.dpi(eta) / (miss * miss)) *
                 model.z.row(i).transpose() * model.x.row(i);
      }
      const Matrix jac = v_gamma0 * cross;  // d gamma / d theta
      fit.vcov.block(0, p, p, q) = v_theta * jac.transpose();
      fit.vcov.block(p, 0, q, p) = jac * v_theta;
      fit.vcov.bottomRightCorner(q, q) = v_gamma0 + jac * v_theta * jac.transpose();
      estimate << theta_c, gamma;
      fit.psi_hat = psi_bar_of(gamma, fit.vcov.bottomRightCorner(q, q), fit.psi_se);
      fit.converged = cl.converged && stage2.converged;
      fit.iterations += stage2.iterations;
      fit.gradient_norm = std::max(cl.gradient_norm, stage2.gradient_norm);
      fit.loglik = model.full(theta_c, gamma);
    }
  } else {
    const double naive = std::clamp(model.m_plus() / model.n(), 1e-6, 1.0 - 1e-6);
    Vector start(p + q);
    start.head(p) = theta_c;
    start.tail(q).setZero();
    start[p] = logit(naive);
    const OptimResult ml = maximize(
        [&](const Vector& w) { return model.full(w.head(p), w.tail(q)); },
        [&](const Vector& w) { return model.full_gradient(w.head(p), w.tail(q)); }, start, options);
    const Vector theta = ml.argmax.head(p);
    const Vector gamma = ml.argmax.tail(q);
    fit.converged = ml.converged;
    fit.iterations = ml.iterations;
    fit.gradient_norm = ml.gradient_norm;
    fit.loglik = ml.value;
    bool singular = false;
    if (constant_psi) {
      const double psi = logistic(gamma[0]);
      Vector natural(p + 1);
      natural << theta, psi;
      Matrix h;
      try {
        h = hessian_from_gradient(
            [&](const Vector& w) { return model.constant_psi_gradient(w.head(p), w[p]); }, natural);
      } catch (const NumericalError&) {
        h = Matrix::Constant(p + 1, p + 1, kNaN);
      }
      fit.vcov = h.allFinite() ? covariance_from_hessian(h, &singular)
                               : Matrix::Constant(p + 1, p + 1, kNaN);
      estimate = natural;
      fit.psi_hat = psi;
      fit.psi_se = sqrt_or_nan(fit.vcov(p, p));
      fit.psi_boundary = psi > 1.0 - 1e-6;
    } else {
      fit.vcov = covariance_from_hessian(ml.hessian, &singular);
      estimate = ml.argmax;
      fit.psi_hat = psi_bar_of(gamma, fit.vcov.bottomRightCorner(q, q), fit.psi_se);
    }
    if (singular) fit.notes.push_back("singular_information");
  }

  fit.estimate = estimate;
  fit.aic = -2.0 * fit.loglik + 2.0 * static_cast<double>(p + q);
  const Matrix v_theta = fit.vcov.topLeftCorner(p, p);
  if (p == 1) {
    const double t = fit.estimate[0];
    const double sd = sqrt_or_nan(v_theta(0, 0));
    if (dataset.family() == Family::poisson)
      fit.derived.push_back({"lambda", std::exp(t), std::exp(t) * sd});
    else
      fit.derived.push_back({"p", logistic(t), logistic(t) * logistic(-t) * sd});
  }
  return fit;
}

}  // namespace occuhet
