#include "doctest.h"

#include "occuhet/robust.hpp"
#include "occuhet/zib.hpp"
#include "occuhet/zip.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace occuhet;

TEST_CASE("rho closed form") {
  const auto r0 = bias_rho(1.0, 0.0, 0.5);
  CHECK(r0.rho == 1.0);
  CHECK(r0.relative_bias_pct() == 0.0);
  const double e = std::exp(1.0);
  const auto r1 = bias_rho(1.0, 1.0, 0.5);
  CHECK(r1.rho == doctest::Approx((e - 2.0) / (e - 1.5)).epsilon(1e-14));
  CHECK(r1.asymptotic_limit == doctest::Approx(0.5 * r1.rho));
  CHECK(r1.relative_bias_pct() == doctest::Approx(-41.04).epsilon(1e-3));
  const auto r5 = bias_rho(5.0, 1.0);
  CHECK(r5.rho == doctest::Approx(0.9965).epsilon(1e-4));
  CHECK_THROWS_AS(bias_rho(0.0, 1.0), ValidationError);
  CHECK_THROWS_AS(bias_rho(1.0, -1.0), ValidationError);
}

TEST_CASE("rho bounds and monotonicity over a grid") {
  for (double mu = 0.05; mu < 10.0; mu *= 1.5) {
    double prev = 2.0;
    for (double s2 = 0.0; s2 < 50.0; s2 = s2 * 2.0 + 0.01) {
      const double rho = bias_rho(mu, s2).rho;
      CHECK(rho > 0.0);
      CHECK(rho <= 1.0);
      if (s2 > 0.0) CHECK(rho < 1.0);
      CHECK(rho < prev);
      prev = rho;
      CHECK(bias_rho(mu * 1.5, s2 + 0.001).rho > bias_rho(mu, s2 + 0.001).rho);
    }
  }
}

TEST_CASE("omega") {
  const auto c = limit_omega({0.2, 0.7, 0.95}, {0.4, 0.4, 0.4});
  CHECK(c.exact == doctest::Approx(0.4).epsilon(1e-8));
  CHECK(c.approx == doctest::Approx(0.4));

  const auto w = limit_omega({0.9, 0.1}, {0.9, 0.3});
  CHECK(w.approx == doctest::Approx(0.84));
  // bisection oracle for the two-site display
  auto f = [](double om) { return (0.81 - om * 0.9) / (1 - om * 0.9) + (0.03 - om * 0.1) / (1 - om * 0.1); };
  double lo = 1e-9, hi = (1 - 1e-12) / 0.9;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) > 0) lo = mid;
    else hi = mid;
  }
  CHECK(w.exact == doctest::Approx(0.5 * (lo + hi)).epsilon(1e-8));
  CHECK(w.exact > 0.6);

  CHECK_THROWS_AS(limit_omega({}, {}), ValidationError);
  CHECK_THROWS_AS(limit_omega({0.5}, {0.5, 0.5}), ValidationError);
}

TEST_CASE("omega direction follows a monotone relation of psi and pi") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> pi(30), psi(30);
    for (double& v : pi) v = u(rng);
    const double slope = u(rng) - 0.5;
    double ms = 0;
    for (std::size_t i = 0; i < 30; ++i) {
      psi[i] = 0.5 + slope * (pi[i] - 0.5);
      ms += psi[i] / 30;
    }
    const double om = limit_omega(pi, psi).exact;
    CHECK((om > ms) == (slope > 0));
  }
}

TEST_CASE("omega averages to psi bar under shuffling") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::vector<double> pi(50), psi(50);
  for (std::size_t i = 0; i < 50; ++i) {
    pi[i] = u(rng);
    psi[i] = u(rng);
  }
  double psi_bar = 0;
  for (double v : psi) psi_bar += v / 50;
  double mean = 0;
  const int shuffles = 2000;
  for (int s = 0; s < shuffles; ++s) {
    std::shuffle(psi.begin(), psi.end(), rng);
    mean += limit_omega(pi, psi).exact / shuffles;
  }
  CHECK(std::abs(mean - psi_bar) < 0.01);
}

TEST_CASE("HT arithmetic") {
  const Dataset one(Family::poisson, 1, {"a"}, {2}, {}, Eigen::MatrixXd(1, 0));
  Vector theta(1);
  theta << std::log(std::log(2.0));
  const auto ht = ht_at(one, Formula::parse("1"), theta);
  CHECK(ht.psi_bar_hat == doctest::Approx(2.0));
  CHECK(ht.boundary);

  const Dataset d(Family::poisson, 1, {"a", "b", "c", "d"}, {3, 0, 1, 0}, {}, Eigen::MatrixXd(4, 0));
  theta << 40.0;
  CHECK(ht_at(d, Formula::parse("1"), theta).psi_bar_hat == doctest::Approx(0.5));

  FitResult fit;
  fit.family = Family::poisson;
  fit.method = Method::cl;
  fit.n_detection = 1;
  fit.estimate = Vector::Constant(2, 40.0);
  fit.vcov = Matrix::Zero(2, 2);
  const auto full = ht_psi_bar(d, fit);
  CHECK(full.variance == doctest::Approx(2.0 * (1.0 - 0.5) / 16.0));
  fit.method = Method::ml;
  CHECK_THROWS_AS(ht_psi_bar(d, fit), ValidationError);
}

TEST_CASE("HT variance matches a numeric derivative") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> norm;
  const int n = 300;
  Eigen::MatrixXd cov(n, 1);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) {
    cov(i, 0) = norm(rng);
    std::poisson_distribution<int> p(std::exp(0.2 + 0.7 * cov(i, 0)));
    std::bernoulli_distribution occ(0.65);
    const int draw = p(rng);
    y[i] = occ(rng) ? draw : 0;
  }
  const Dataset d(Family::poisson, 1, std::vector<std::string>(n, "s"), y, {"x"}, cov);
  const auto fit = fit_zip_regression(d, Formula::parse("1 + x"), Formula::parse("1"), Method::cl);
  const auto ht = ht_psi_bar(d, fit);

  long detected = 0;
  for (int v : y) detected += v > 0;
  CHECK(ht.psi_bar_hat >= static_cast<double>(detected) / n);
  CHECK(ht.se >= 0.0);

  auto total = [&](const Vector& t) {
    double s = 0;
    for (int i = 0; i < n; ++i)
      if (y[i] > 0) s += 1.0 / -std::expm1(-std::exp(t[0] + t[1] * cov(i, 0)));
    return s;
  };
  const Vector theta = fit.theta();
  Vector dnum(2);
  for (int j = 0; j < 2; ++j) {
    Vector up = theta, dn = theta;
    up[j] += 1e-6;
    dn[j] -= 1e-6;
    dnum[j] = (total(up) - total(dn)) / 2e-6;
  }
  double sampling = 0;
  for (int i = 0; i < n; ++i)
    if (y[i] > 0) {
      const double pi = -std::expm1(-std::exp(theta[0] + theta[1] * cov(i, 0)));
      sampling += (1 - ht.psi_bar_hat * pi) / (pi * pi);
    }
  const double expected = (sampling + dnum.dot(fit.theta_vcov() * dnum)) / (double(n) * n);
  CHECK(ht.variance == doctest::Approx(expected).epsilon(1e-4));
}

TEST_CASE("HT for the binomial family") {
  const Dataset d(Family::binomial, 3, {"a", "b", "c", "d", "e"}, {1, 0, 2, 3, 0}, {}, Eigen::MatrixXd(5, 0));
  Vector theta(1);
  theta << 0.0;  // p = 0.5, pi = 0.875
  CHECK(ht_at(d, Formula::parse("1"), theta).psi_bar_hat == doctest::Approx(3.0 / 0.875 / 5.0));
}
