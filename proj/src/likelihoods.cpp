#include "dualgp/likelihoods.hpp"

#include "dualgp/error.hpp"
#include "dualgp/quadrature.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace dualgp {

namespace {

constexpr double kLog2Pi = 1.83787706640934548356065947281123527972;
constexpr double kTailSwitch = -20.0;

// 1 - 1/z^2 + 3/z^4 - 15/z^6 + ...  (Phi(z) = phi(z)/|z| * series, z << 0)
double mills_series(double z) {
  const double inv2 = 1.0 / (z * z);
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k <= 10; ++k) {
    term *= -static_cast<double>(2 * k - 1) * inv2;
    sum += term;
  }
  return sum;
}

double log_normal_pdf(double z) { return -0.5 * (kLog2Pi + z * z); }

double label_sign(double y) {
  if (y == 1.0) return 1.0;
  if (y == 0.0) return -1.0;
  std::ostringstream os;
  os << "invalid label " << y << " for Bernoulli likelihood (expected 0 or 1)";
  throw InvalidArgument(os.str());
}

}  // namespace

double log_normal_cdf(double z) {
  if (z < kTailSwitch) return log_normal_pdf(z) - std::log(-z) + std::log(mills_series(z));
  if (z > 0.0) return std::log1p(-0.5 * std::erfc(z / std::numbers::sqrt2));
  return std::log(0.5 * std::erfc(-z / std::numbers::sqrt2));
}

double normal_hazard(double z) {
  if (z < kTailSwitch) return -z / mills_series(z);
  return std::exp(log_normal_pdf(z)) / (0.5 * std::erfc(-z / std::numbers::sqrt2));
}

LikelihoodSpec LikelihoodSpec::gaussian(double noise_variance, int quadrature_order) {
  if (!(noise_variance > 0.0)) throw InvalidArgument("Gaussian likelihood: noise must be positive");
  LikelihoodSpec s{LikelihoodFamily::Gaussian, std::log(noise_variance), quadrature_order};
  s.validate();
  return s;
}

LikelihoodSpec LikelihoodSpec::probit(int quadrature_order) {
  LikelihoodSpec s{LikelihoodFamily::BernoulliProbit, 0.0, quadrature_order};
  s.validate();
  return s;
}

double LikelihoodSpec::noise() const { return std::exp(log_noise); }

void LikelihoodSpec::validate() const {
  if (quadrature_order < 2) throw InvalidArgument("likelihood: quadrature_order must be >= 2");
  if (!std::isfinite(log_noise)) throw InvalidArgument("likelihood: non-finite noise");
}

std::string to_string(LikelihoodFamily f) {
  return f == LikelihoodFamily::Gaussian ? "gaussian" : "probit";
}

double log_density(const LikelihoodSpec& lik, double y, double f) {
  switch (lik.family) {
    case LikelihoodFamily::Gaussian: {
      const double s2 = lik.noise();
      const double r = y - f;
      return -0.5 * (kLog2Pi + std::log(s2) + r * r / s2);
    }
    case LikelihoodFamily::BernoulliProbit:
      return log_normal_cdf(label_sign(y) * f);
  }
  return 0.0;
}

Expectations expectations(const LikelihoodSpec& lik, double y, double m, double v) {
  if (!(v > 0.0)) {
    std::ostringstream os;
    os << "expectations: marginal variance must be positive (got " << v << ")";
    throw InvalidArgument(os.str());
  }
  switch (lik.family) {
    case LikelihoodFamily::Gaussian: {
      const double s2 = lik.noise();
      const double r = y - m;
      return {-0.5 * (kLog2Pi + std::log(s2) + (r * r + v) / s2), r / s2, 1.0 / s2};
    }
    case LikelihoodFamily::BernoulliProbit: {
      const double s = label_sign(y);
      const GaussHermite& rule = gauss_hermite(lik.quadrature_order);
      const double sd = std::sqrt(v);
      Expectations e;
      for (Eigen::Index k = 0; k < rule.nodes.size(); ++k) {
        const double z = s * (m + sd * rule.nodes(k));
        const double h = normal_hazard(z);
        const double w = rule.weights(k);
        e.ell += w * log_normal_cdf(z);
        e.alpha += w * s * h;
        e.beta += w * h * (z + h);
      }
      return e;
    }
  }
  return {};
}

SiteGradient site_natgrad(double alpha, double beta, double m) {
  return {beta * m + alpha, std::max(beta, kBetaFloor), 0.0};
}

SiteGradient site_natgrad(const Expectations& e, double m) {
  SiteGradient g = site_natgrad(e.alpha, e.beta, m);
  g.ell = e.ell;
  return g;
}

double predictive_log_density(const LikelihoodSpec& lik, double y, double m, double v) {
  if (!(v > 0.0)) throw InvalidArgument("predictive_log_density: variance must be positive");
  switch (lik.family) {
    case LikelihoodFamily::Gaussian: {
      const double s = v + lik.noise();
      const double r = y - m;
      return -0.5 * (kLog2Pi + std::log(s) + r * r / s);
    }
    case LikelihoodFamily::BernoulliProbit:
      // integral of Phi(s f) N(f; m, v) df = Phi(s m / sqrt(1 + v))
      return log_normal_cdf(label_sign(y) * m / std::sqrt(1.0 + v));
  }
  return 0.0;
}

double expected_log_lik_sum(const LikelihoodSpec& lik, const VectorXd& y, const VectorXd& means,
                            const VectorXd& vars) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) acc += expectations(lik, y(i), means(i), vars(i)).ell;
  return acc;
}

void validate_targets(const LikelihoodSpec& lik, const VectorXd& y) {
  if (!y.allFinite()) throw InvalidArgument("targets contain non-finite values");
  if (lik.family == LikelihoodFamily::BernoulliProbit)
    for (Eigen::Index i = 0; i < y.size(); ++i) label_sign(y(i));
}

}  // namespace dualgp
