#include "dualgp/error.hpp"
#include "dualgp/likelihoods.hpp"
#include "dualgp/quadrature.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace dualgp;

namespace {

const double kHalfLog2Pi = 0.5 * oracle::kLog2Pi;

struct Grid {
  std::vector<double> means, vars;
};

Grid probit_grid() {
  Grid g;
  for (int i = 0; i <= 20; ++i) g.means.push_back(-5.0 + 0.5 * i);
  for (int j = 0; j <= 16; ++j) g.vars.push_back(1e-3 * std::pow(1e4, j / 16.0));
  return g;
}

// Largest difference of (ell, alpha, beta) between two orders over the grid, for v <= vmax.
double order_gap(int lo, int hi, double vmax) {
  const LikelihoodSpec a = LikelihoodSpec::probit(lo), b = LikelihoodSpec::probit(hi);
  const Grid g = probit_grid();
  double worst = 0.0;
  for (double y : {0.0, 1.0})
    for (double m : g.means)
      for (double v : g.vars) {
        if (v > vmax * (1 + 1e-12)) continue;
        const Expectations ea = expectations(a, y, m, v), eb = expectations(b, y, m, v);
        worst = std::max({worst, std::abs(ea.ell - eb.ell), std::abs(ea.alpha - eb.alpha),
                          std::abs(ea.beta - eb.beta)});
      }
  return worst;
}

}  // namespace

TEST_CASE("log_density examples") {
  const LikelihoodSpec gauss = LikelihoodSpec::gaussian(1.0);
  CHECK(log_density(gauss, 0.4, 0.4) == doctest::Approx(-kHalfLog2Pi).epsilon(1e-14));
  CHECK(log_density(gauss, 1.0, 0.0) == doctest::Approx(-0.5 - kHalfLog2Pi).epsilon(1e-14));
  const LikelihoodSpec probit = LikelihoodSpec::probit();
  CHECK(log_density(probit, 0.0, 0.0) == doctest::Approx(std::log(0.5)).epsilon(1e-14));
  CHECK(log_density(probit, 1.0, 0.0) == doctest::Approx(std::log(0.5)).epsilon(1e-14));
  CHECK_THROWS_AS(log_density(probit, 2.0, 0.0), InvalidArgument);
  CHECK_THROWS_AS(log_density(probit, -1.0, 0.0), InvalidArgument);
}

TEST_CASE("gaussian expectations are closed form") {
  const LikelihoodSpec lik = LikelihoodSpec::gaussian(0.3);
  for (double v : {1e-3, 0.5, 4.0}) {
    const Expectations e = expectations(lik, 1.2, -0.4, v);
    CHECK(e.alpha == doctest::Approx((1.2 + 0.4) / 0.3).epsilon(1e-14));
    CHECK(e.beta == doctest::Approx(1.0 / 0.3).epsilon(1e-14));
    const double ell = -0.5 * (oracle::kLog2Pi + std::log(0.3) + (1.6 * 1.6 + v) / 0.3);
    CHECK(e.ell == doctest::Approx(ell).epsilon(1e-14));
  }
  CHECK_THROWS_AS(expectations(lik, 0.0, 0.0, 0.0), InvalidArgument);
  CHECK_THROWS_AS(expectations(lik, 0.0, 0.0, -1.0), InvalidArgument);
}

TEST_CASE("probit expectations collapse to point evaluation as v -> 0") {
  const LikelihoodSpec lik = LikelihoodSpec::probit();
  for (double m : {-3.0, -0.5, 0.0, 1.7}) {
    const Expectations e = expectations(lik, 1.0, m, 1e-12);
    CHECK(e.alpha == doctest::Approx(normal_hazard(m)).epsilon(1e-5));
    CHECK(e.ell == doctest::Approx(std::log(oracle::normal_cdf(m))).epsilon(1e-5));
  }
}

TEST_CASE("probit expectations agree with Monte-Carlo at m=0, v=1") {
  const LikelihoodSpec lik = LikelihoodSpec::probit();
  const Expectations e = expectations(lik, 1.0, 0.0, 1.0);
  std::mt19937_64 rng(21);
  std::normal_distribution<double> nd;
  const int N = 10000000;
  double s[3] = {0, 0, 0}, s2[3] = {0, 0, 0};
  for (int k = 0; k < N; ++k) {
    const double f = nd(rng);
    const double Phi = oracle::normal_cdf(f);
    const double phi = std::exp(-0.5 * f * f) / std::sqrt(2.0 * M_PI);
    const double h = phi / Phi;
    const double vals[3] = {std::log(Phi), h, h * (f + h)};
    for (int c = 0; c < 3; ++c) {
      s[c] += vals[c];
      s2[c] += vals[c] * vals[c];
    }
  }
  const double got[3] = {e.ell, e.alpha, e.beta};
  for (int c = 0; c < 3; ++c) {
    const double mean = s[c] / N;
    const double se = std::sqrt((s2[c] / N - mean * mean) / N);
    CHECK(std::abs(got[c] - mean) < 3.0 * se);
  }
}

TEST_CASE("site_natgrad") {
  const SiteGradient g = site_natgrad(0.5, 2.0, 1.5);
  CHECK(g.g1 == doctest::Approx(3.5));
  CHECK(g.g2 == doctest::Approx(2.0));
  CHECK(g.lambda1() == doctest::Approx(3.5));
  CHECK(g.lambda2() == doctest::Approx(-1.0));
  const SiteGradient flat = site_natgrad(0.0, 0.0, 0.7);
  CHECK(flat.g1 == 0.0);
  CHECK(flat.g2 == kBetaFloor);
}

TEST_CASE("predictive_log_density examples") {
  const LikelihoodSpec gauss = LikelihoodSpec::gaussian(1.0);
  CHECK(predictive_log_density(gauss, 0.3, 0.3, 0.5) ==
        doctest::Approx(-0.5 * std::log(2.0 * M_PI * 1.5)).epsilon(1e-14));
  // log N(1; 0, 2) = -ln(4 pi)/2 - 1/4
  CHECK(predictive_log_density(gauss, 1.0, 0.0, 1.0) == doctest::Approx(-0.5 * std::log(4.0 * M_PI) - 0.25).epsilon(1e-14));
  CHECK(predictive_log_density(gauss, 1.0, 0.0, 1.0) == doctest::Approx(-1.515512).epsilon(1e-6));
  const LikelihoodSpec probit = LikelihoodSpec::probit();
  for (double v : {1e-4, 1.0, 25.0}) {
    CHECK(predictive_log_density(probit, 1.0, 0.0, v) == doctest::Approx(std::log(0.5)).epsilon(1e-14));
    CHECK(predictive_log_density(probit, 0.0, 0.0, v) == doctest::Approx(std::log(0.5)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(predictive_log_density(probit, 3.0, 0.0, 1.0), InvalidArgument);
}

TEST_CASE("probit predictive agrees with direct integration") {
  const LikelihoodSpec probit = LikelihoodSpec::probit();
  for (double m : {-2.0, -0.3, 0.8, 3.0})
    for (double v : {0.01, 0.7, 5.0})
      for (double y : {0.0, 1.0}) {
        const double s = y > 0.5 ? 1.0 : -1.0;
        const double p = oracle::simpson_expect(m, v, [&](double f) { return oracle::normal_cdf(s * f); });
        CHECK(predictive_log_density(probit, y, m, v) == doctest::Approx(std::log(p)).epsilon(1e-10));
      }
}

TEST_CASE("log_normal_cdf and hazard in the tails") {
  for (double z : {-30.0, -10.0, -3.0, 0.0, 2.0, 6.0}) {
    const double ref = std::log(0.5 * std::erfc(-z / std::sqrt(2.0)));
    CHECK(log_normal_cdf(z) == doctest::Approx(ref).epsilon(1e-12));
    const double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
    CHECK(normal_hazard(z) == doctest::Approx(phi / (0.5 * std::erfc(-z / std::sqrt(2.0)))).epsilon(1e-10));
  }
  CHECK(std::isfinite(log_normal_cdf(-60.0)));
  CHECK(normal_hazard(-60.0) == doctest::Approx(60.0).epsilon(1e-3));
}

TEST_CASE("gauss-hermite rule integrates low-order moments") {
  const GaussHermite& rule = gauss_hermite(20);
  CHECK(rule.weights.sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(gauss_hermite_expect(rule, 0.5, 2.0, [](double f) { return f * f; }) ==
        doctest::Approx(2.25).epsilon(1e-13));
  CHECK(gauss_hermite_expect(rule, 0.0, 1.0, [](double f) { return f * f * f * f; }) ==
        doctest::Approx(3.0).epsilon(1e-13));
}

TEST_CASE("probit beta is positive over the grid") {
  const LikelihoodSpec lik = LikelihoodSpec::probit();
  const Grid g = probit_grid();
  for (double y : {0.0, 1.0})
    for (double m : g.means)
      for (double v : g.vars) CHECK(expectations(lik, y, m, v).beta > 0.0);
}

// Gauss-Hermite on log Phi converges slowly once the marginal is wide; see the envelope test.
TEST_CASE("quadrature orders 20 and 50 agree within 1e-8 over the full grid" * doctest::should_fail()) {
  CHECK(order_gap(20, 50, 10.0) < 1e-8);
}

TEST_CASE("quadrature order gap envelope") {
  CHECK(order_gap(20, 50, 0.3) < 1e-12);
  CHECK(order_gap(20, 50, 1.0) < 1e-8);
  CHECK(order_gap(20, 50, 10.0) < 5e-3);
  CHECK(order_gap(200, 400, 10.0) < 1e-9);
}

TEST_CASE("likelihood validation") {
  CHECK_THROWS_AS(LikelihoodSpec::gaussian(0.0), InvalidArgument);
  CHECK_THROWS_AS(LikelihoodSpec::probit(1), InvalidArgument);
  VectorXd y(3);
  y << 0, 1, 0.5;
  CHECK_THROWS_AS(validate_targets(LikelihoodSpec::probit(), y), InvalidArgument);
  CHECK_NOTHROW(validate_targets(LikelihoodSpec::gaussian(1.0), y));
}
