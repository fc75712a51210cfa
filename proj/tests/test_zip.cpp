#include "doctest.h"

#include "occuhet/model.hpp"
#include "occuhet/regression.hpp"
#include "occuhet/zip.hpp"

#include <cmath>
#include <random>

using namespace occuhet;

namespace {

double bisect(const std::function<double(double)>& f, double lo, double hi) {
  double flo = f(lo);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm < 0) == (flo < 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double zip_loglik(const std::map<int, long>& m, double lambda, double psi) {
  double ll = 0.0;
  for (const auto& [k, count] : m) {
    if (k == 0)
      ll += count * std::log(1.0 - psi + psi * std::exp(-lambda));
    else
      ll += count * (std::log(psi) + k * std::log(lambda) - lambda - std::lgamma(k + 1.0));
  }
  return ll;
}

struct SimData {
  Dataset data;
  std::vector<double> x;
};

SimData simulate_zip(int n, double b0, double b1, double psi, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> norm;
  std::bernoulli_distribution occ(psi);
  std::vector<int> y(static_cast<std::size_t>(n));
  Eigen::MatrixXd cov(n, 1);
  std::vector<double> x(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    x[static_cast<std::size_t>(i)] = norm(rng);
    cov(i, 0) = x[static_cast<std::size_t>(i)];
    std::poisson_distribution<int> pois(std::exp(b0 + b1 * cov(i, 0)));
    const bool o = occ(rng);
    const int draw = pois(rng);
    y[static_cast<std::size_t>(i)] = o ? draw : 0;
  }
  std::vector<std::string> ids(static_cast<std::size_t>(n), "s");
  return {Dataset(Family::poisson, 1, ids, y, {"x"}, cov), x};
}

// Full log-likelihood of the constant-psi ZIP regression, written out directly.
double zip_reg_loglik(const Dataset& d, const std::vector<double>& x, double b0, double b1, double psi) {
  double ll = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double eta = b0 + b1 * x[i];
    const double lambda = std::exp(eta);
    const int y = d.y()[i];
    if (y > 0)
      ll += std::log(psi) + y * eta - lambda - std::lgamma(y + 1.0);
    else
      ll += std::log(1.0 - psi + psi * std::exp(-lambda));
  }
  return ll;
}

double conditional_loglik(const Dataset& d, const std::vector<double>& x, double b0, double b1) {
  double ll = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const int y = d.y()[i];
    if (y == 0) continue;
    const double eta = b0 + b1 * x[i];
    ll += y * eta - std::exp(eta) - std::lgamma(y + 1.0) - std::log(-std::expm1(-std::exp(eta)));
  }
  return ll;
}

template <class F>
std::vector<double> central_gradient(F f, std::vector<double> at, double h = 1e-6) {
  std::vector<double> g(at.size());
  for (std::size_t j = 0; j < at.size(); ++j) {
    auto up = at, dn = at;
    up[j] += h;
    dn[j] -= h;
    g[j] = (f(up) - f(dn)) / (2 * h);
  }
  return g;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return std::sqrt(s);
}

FrequencyTable table(std::map<int, long> m) { return FrequencyTable(std::move(m)); }

}  // namespace

TEST_CASE("homogeneous ZIP matches the bisection root") {
  const auto freq = table({{0, 85}, {1, 10}, {2, 5}});
  const double lambda = bisect([](double l) { return l / -std::expm1(-l) - 20.0 / 15.0; }, 1e-9, 20.0);
  const double psi = 15.0 / (100.0 * -std::expm1(-lambda));
  for (Method m : {Method::cl, Method::ml}) {
    const auto fit = fit_zip_homogeneous(freq, m);
    CHECK(fit.converged);
    CHECK(std::exp(fit.estimate[0]) == doctest::Approx(lambda).epsilon(1e-7));
    CHECK(fit.psi_hat == doctest::Approx(psi).epsilon(1e-7));
  }
  CHECK(lambda == doctest::Approx(0.60586).epsilon(1e-4));
  CHECK(psi == doctest::Approx(0.33011).epsilon(1e-4));

  // coarse grid of the joint likelihood confirms the maximum
  double best = -1e300, bl = 0, bp = 0;
  for (int i = 1; i <= 400; ++i)
    for (int j = 1; j < 400; ++j) {
      const double l = 0.005 * i, p = j / 400.0;
      const double v = zip_loglik(freq.counts(), l, p);
      if (v > best) {
        best = v;
        bl = l;
        bp = p;
      }
    }
  CHECK(std::abs(bl - lambda) <= 0.005);
  CHECK(std::abs(bp - psi) <= 1.0 / 400.0);
}

TEST_CASE("homogeneous fit through the regression path agrees") {
  std::vector<int> y;
  for (int i = 0; i < 85; ++i) y.push_back(0);
  for (int i = 0; i < 10; ++i) y.push_back(1);
  for (int i = 0; i < 5; ++i) y.push_back(2);
  const Dataset d(Family::poisson, 1, std::vector<std::string>(100, "s"), y, {}, Eigen::MatrixXd(100, 0));
  const auto freq_fit = fit_zip_homogeneous(aggregate(d), Method::ml);
  for (Method m : {Method::ml, Method::cl}) {
    const auto reg = fit_regression(d, Formula::parse("1"), Formula::parse("1"), m);
    CHECK(reg.estimate[0] == doctest::Approx(freq_fit.estimate[0]).epsilon(1e-7));
    CHECK(reg.psi_hat == doctest::Approx(freq_fit.psi_hat).epsilon(1e-7));
    CHECK(reg.standard_errors()[1] == doctest::Approx(freq_fit.standard_errors()[1]).epsilon(1e-4));
  }
}

TEST_CASE("ML and CL agree for mixtures of the intensity") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 5; ++rep) {
    std::gamma_distribution<double> g(1.5, 2.0 / 1.5);
    std::bernoulli_distribution occ(0.6);
    std::map<int, long> m;
    for (int i = 0; i < 300; ++i) {
      std::poisson_distribution<int> p(g(rng));
      const int draw = p(rng);
      ++m[occ(rng) ? draw : 0];
    }
    const auto freq = table(m);
    const auto ml = fit_zip_mixture(freq, {MixtureKind::gamma, 1}, Method::ml);
    const auto cl = fit_zip_mixture(freq, {MixtureKind::gamma, 1}, Method::cl);
    REQUIRE(ml.estimate.size() == cl.estimate.size());
    for (Eigen::Index j = 0; j < ml.estimate.size(); ++j)
      if (std::isfinite(ml.estimate[j])) CHECK(std::abs(ml.estimate[j] - cl.estimate[j]) < 1e-6);
  }
}

TEST_CASE("gamma mixture without support collapses to the Poisson limit") {
  const auto freq = table({{0, 80}, {1, 12}, {2, 8}});
  const auto fit = fit_zip_mixture(freq, {MixtureKind::gamma, 1}, Method::ml);
  CHECK(std::isinf(fit.estimate[1]));
  CHECK(fit.flagged());
  const auto base = fit_zip_homogeneous(freq, Method::ml);
  CHECK(fit.psi_hat == doctest::Approx(base.psi_hat));
}

TEST_CASE("all detections single gives the vanishing-detection limit") {
  const auto fit = fit_zip_homogeneous(table({{0, 90}, {1, 10}}), Method::cl);
  CHECK(fit.flagged());
  CHECK(std::isinf(fit.estimate[0]));
}

TEST_CASE("no detections is rejected") {
  CHECK_THROWS_AS(fit_zip_homogeneous(table({{0, 50}}), Method::ml), ValidationError);
}

TEST_CASE("cell probabilities sum to one") {
  for (double kappa : {0.3, 1.0, 5.0, 100.0}) {
    const auto spec = MixtureSpec::gamma(2.0, kappa);
    double total = 0.0;
    for (int k = 0; k < 3000; ++k) total += cell_prob(spec, k);
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
  const auto fin = MixtureSpec::finite({0.5, 4.0}, {0.3, 0.7});
  double total = 0.0;
  for (int k = 0; k < 200; ++k) total += cell_prob(fin, k);
  CHECK(std::abs(total - 1.0) <= 1e-12);
  // Poisson(0.5) and Poisson(4) evaluated by hand at k = 2
  const double direct = 0.3 * std::exp(-0.5) * 0.125 + 0.7 * std::exp(-4.0) * 8.0;
  CHECK(cell_prob(fin, 2) == doctest::Approx(direct).epsilon(1e-12));
  CHECK_THROWS_AS(MixtureSpec::gamma(-1.0, 1.0), ValidationError);
  CHECK_THROWS_AS(MixtureSpec::finite({1.0, 2.0}, {0.5, 0.6}), ValidationError);
}

TEST_CASE("finite mixture cell model gradient") {
  const FinitePoissonCells cells(2);
  Vector theta(3);
  theta << -0.2, 1.1, 0.4;
  for (int k : {0, 1, 3, 7}) {
    Vector grad;
    cells.log_prob(k, theta, &grad);
    const Vector num = numeric_gradient([&](const Vector& t) { return cells.log_prob(k, t, nullptr); }, theta);
    CHECK((grad - num).norm() < 1e-6);
  }
}

TEST_CASE("regression scores vanish at the optimum") {
  const auto sim = simulate_zip(400, 0.3, 0.8, 0.7, 17);
  const auto det = Formula::parse("1 + x");
  const auto occ = Formula::parse("1");

  const auto ml = fit_zip_regression(sim.data, det, occ, Method::ml);
  REQUIRE(ml.converged);
  const double psi_ml = ml.psi_hat;
  const auto g_ml = central_gradient(
      [&](const std::vector<double>& v) { return zip_reg_loglik(sim.data, sim.x, v[0], v[1], v[2]); },
      {ml.estimate[0], ml.estimate[1], psi_ml});
  CHECK(norm(g_ml) <= 1e-6 * sim.data.size());

  const auto sc = score_components(ml, sim.data);
  CHECK(sc.full_theta_score.norm() <= 1e-6);
  CHECK(std::abs(sc.psi_score) <= 1e-6);
  CHECK(std::abs(sc.full_theta_score[0] - g_ml[0]) < 1e-4);
  CHECK(std::abs(sc.psi_score - g_ml[2]) < 1e-4);

  const auto cl = fit_zip_regression(sim.data, det, occ, Method::cl);
  REQUIRE(cl.converged);
  const auto g_cl = central_gradient(
      [&](const std::vector<double>& v) { return conditional_loglik(sim.data, sim.x, v[0], v[1]); },
      {cl.estimate[0], cl.estimate[1]});
  CHECK(norm(g_cl) <= 1e-6 * sim.data.size());
  const auto sc_cl = score_components(cl, sim.data);
  CHECK(sc_cl.conditional_score.norm() <= 1e-6);
  CHECK(std::abs(sc_cl.psi_score) <= 1e-6);
  CHECK(cl.conditional_loglik == doctest::Approx(conditional_loglik(sim.data, sim.x, cl.estimate[0], cl.estimate[1])));
}

TEST_CASE("conditional variances dominate full-likelihood variances") {
  const auto sim = simulate_zip(3000, 0.0, 1.0, 0.75, 23);
  const auto det = Formula::parse("1 + x");
  const auto ml = fit_zip_regression(sim.data, det, Formula::parse("1"), Method::ml);
  const auto cl = fit_zip_regression(sim.data, det, Formula::parse("1"), Method::cl);
  for (Eigen::Index j = 0; j < 3; ++j) CHECK(cl.vcov(j, j) >= ml.vcov(j, j));
  // eigenvalues of the difference are nonnegative up to noise
  const Matrix diff = cl.theta_vcov() - ml.theta_vcov();
  Eigen::SelfAdjointEigenSolver<Matrix> es(diff);
  CHECK(es.eigenvalues().minCoeff() >= -1e-4 * ml.theta_vcov().norm());
}

TEST_CASE("logistic occurrence") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> norm;
  const int n = 600;
  Eigen::MatrixXd cov(n, 2);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) {
    cov(i, 0) = norm(rng);
    cov(i, 1) = norm(rng);
    const double psi = 1.0 / (1.0 + std::exp(-(0.5 + cov(i, 1))));
    std::bernoulli_distribution occ(psi);
    std::poisson_distribution<int> pois(std::exp(0.5 + 0.5 * cov(i, 0)));
    const int draw = pois(rng);
    y[i] = occ(rng) ? draw : 0;
  }
  const Dataset d(Family::poisson, 1, std::vector<std::string>(n, "s"), y, {"x1", "x2"}, cov);
  const auto fit = fit_model(d, {"1 + x1", "1 + x2", {}, Method::ml});
  REQUIRE(fit.converged);
  CHECK(fit.occurrence_regression);
  CHECK(fit.names.back() == "occ:x2");
  CHECK(std::abs(fit.estimate[3] - 1.0) < 0.5);
  CHECK(fit.psi_hat > 0.0);
  CHECK(fit.psi_hat < 1.0);
  const auto cl = fit_model(d, {"1 + x1", "1 + x2", {}, Method::cl});
  CHECK(cl.converged);
  CHECK(std::abs(cl.estimate[1] - fit.estimate[1]) < 0.1);
  CHECK_THROWS_AS(score_components(fit, d), ValidationError);
}

TEST_CASE("rank deficient designs are rejected") {
  const int n = 50;
  Eigen::MatrixXd cov(n, 2);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) {
    cov(i, 0) = i % 7;
    cov(i, 1) = 2.0 * (i % 7);
    y[i] = i % 3;
  }
  const Dataset d(Family::poisson, 1, std::vector<std::string>(n, "s"), y, {"a", "b"}, cov);
  CHECK_THROWS_WITH(fit_zip_regression(d, Formula::parse("1 + a + b"), Formula::parse("1"), Method::ml),
                    doctest::Contains("rank deficient"));
}

TEST_CASE("psi root equation") {
  const std::vector<double> pi0{0.6, 0.8, 0.5};
  bool boundary = true;
  const double psi = solve_psi_root(1, pi0, &boundary);
  CHECK_FALSE(boundary);
  CHECK(std::abs(psi_root_equation(psi, 1, pi0)) < 1e-6);
  double direct = 1.0 / psi;
  for (double p : pi0) direct -= p / (1.0 - psi * p);
  CHECK(std::abs(direct) < 1e-6);

  // one detected and one undetected site with pi = 1/2: the root sits at psi = 1
  CHECK(solve_psi_root(1, {0.5}, &boundary) == doctest::Approx(1.0));
  CHECK(solve_psi_root(4, {0.2, 0.5, 0.1}, &boundary) == 1.0);
  CHECK(boundary);
}
