#include "occuhet/robust.hpp"

#include "occuhet/regression.hpp"

#include <algorithm>
#include <cmath>

namespace occuhet {

BiasReport bias_rho(double mu, double sigma2, double psi) {
  if (!(mu > 0.0) || !std::isfinite(mu)) throw ValidationError("bias analysis needs mu > 0");
  if (!(sigma2 >= 0.0)) throw ValidationError("bias analysis needs sigma2 >= 0");
  BiasReport r;
  r.mu = mu;
  r.sigma2 = sigma2;
  r.psi = psi;
  const double excess = std::expm1(mu) - mu;
  r.rho = 1.0 / (1.0 + 0.5 * sigma2 / excess);
  r.asymptotic_limit = r.rho * psi;
  r.relative_bias = r.rho - 1.0;
  return r;
}

OmegaResult limit_omega(const std::vector<double>& pi, const std::vector<double>& psi) {
  if (pi.empty()) throw ValidationError("limit_omega needs nonempty vectors");
  if (pi.size() != psi.size()) throw ValidationError("limit_omega needs equal lengths");
  double sum_pi = 0.0, sum_psi_pi = 0.0, max_pi = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (!(pi[i] > 0.0 && pi[i] <= 1.0)) throw ValidationError("pi entries must lie in (0, 1]");
    if (!(psi[i] >= 0.0 && psi[i] <= 1.0)) throw ValidationError("psi entries must lie in [0, 1]");
    sum_pi += pi[i];
    sum_psi_pi += pi[i] * psi[i];
    max_pi = std::max(max_pi, pi[i]);
  }
  auto f = [&](double w) {
    double s = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i) s += pi[i] * (psi[i] - w) / (1.0 - w * pi[i]);
    return s;
  };
  OmegaResult out;
  out.approx = sum_psi_pi / sum_pi;
  if (sum_psi_pi == 0.0) {
    out.exact = 0.0;
  } else {
    const double hi = (1.0 - 1e-12) / max_pi;
    out.exact = f(hi) >= 0.0 ? hi : find_root(f, 0.0, hi, 1e-12);
  }
  return out;
}

namespace {

struct HtTerms {
  HtEstimate ht;
  Vector d_theta;
};

HtTerms ht_terms(const Dataset& dataset, const Formula& detection, const Vector& theta) {
  const Matrix x = detection.design(dataset);
  if (x.cols() != theta.size())
    throw ValidationError("detection coefficients do not match the design");
  const DetectionLink link(dataset.family(), dataset.visits());
  HtTerms out;
  out.d_theta = Vector::Zero(theta.size());
  double total = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset.y()[i] == 0) continue;
    const auto row = static_cast<Eigen::Index>(i);
    const double eta = x.row(row).dot(theta);
    const double pi = link.pi(eta);
    if (!(pi > 0.0)) throw ValidationError("fitted detection probability is zero at a detected site");
    out.ht.pi_hat.push_back(pi);
    total += 1.0 / pi;
    out.d_theta += (link.dpi(eta) / (pi * pi)) * x.row(row).transpose();
  }
  out.ht.n = static_cast<long>(dataset.size());
  out.ht.detected = static_cast<long>(out.ht.pi_hat.size());
  out.ht.psi_bar_hat = total / static_cast<double>(dataset.size());
  out.ht.boundary = out.ht.psi_bar_hat > 1.0;
  return out;
}

}  // namespace

HtEstimate ht_at(const Dataset& dataset, const Formula& detection, const Vector& theta) {
  HtEstimate ht = ht_terms(dataset, detection, theta).ht;
  ht.variance = ht.se = std::numeric_limits<double>::quiet_NaN();
  return ht;
}

static void check_detection_fit(const Dataset& dataset, const FitResult& fit) {
  if (fit.method != Method::cl)
    throw ValidationError("Horvitz-Thompson estimate needs a conditional-likelihood detection fit");
  if (fit.family != dataset.family()) throw ValidationError("fit and dataset families differ");
  if (fit.visits != dataset.visits()) throw ValidationError("fit and dataset visit counts differ");
}

double ht_variance(const Dataset& dataset, const FitResult& detection_fit, const HtEstimate& ht) {
  check_detection_fit(dataset, detection_fit);
  if (detection_fit.vcov.rows() < detection_fit.n_detection)
    throw ValidationError("detection fit carries no variance matrix");
  const auto terms = ht_terms(dataset, Formula::parse(detection_fit.detection_formula),
                              detection_fit.theta());
  double sampling = 0.0;
  for (double pi : terms.ht.pi_hat) sampling += (1.0 - ht.psi_bar_hat * pi) / (pi * pi);
  const double n = static_cast<double>(dataset.size());
  const Vector& d = terms.d_theta;
  return (sampling + d.dot(detection_fit.theta_vcov() * d)) / (n * n);
}

HtEstimate ht_psi_bar(const Dataset& dataset, const FitResult& detection_fit) {
  check_detection_fit(dataset, detection_fit);
  HtEstimate ht = ht_terms(dataset, Formula::parse(detection_fit.detection_formula),
                           detection_fit.theta())
                      .ht;
  ht.variance = ht_variance(dataset, detection_fit, ht);
  ht.se = ht.variance >= 0.0 ? std::sqrt(ht.variance) : std::numeric_limits<double>::quiet_NaN();
  return ht;
}

nlohmann::json to_json(const BiasReport& r) {
  return {{"mu", json_number(r.mu)},
          {"sigma2", json_number(r.sigma2)},
          {"psi", json_number(r.psi)},
          {"rho", json_number(r.rho)},
          {"asymptotic_limit", json_number(r.asymptotic_limit)},
          {"relative_bias", json_number(r.relative_bias)},
          {"relative_bias_pct", json_number(r.relative_bias_pct())}};
}

nlohmann::json to_json(const HtEstimate& ht) {
  return {{"estimate", json_number(ht.psi_bar_hat)},
          {"se", json_number(ht.se)},
          {"n", ht.n},
          {"detected", ht.detected},
          {"boundary", ht.boundary}};
}

}  // namespace occuhet
