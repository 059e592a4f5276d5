#pragma once

#include <Eigen/Dense>

#include <string>
#include <string_view>

namespace dualgp {

using Eigen::VectorXd;

enum class LikelihoodFamily { Gaussian, BernoulliProbit };

struct LikelihoodSpec {
  LikelihoodFamily family = LikelihoodFamily::Gaussian;
  double log_noise = 0.0;  // Gaussian only
  int quadrature_order = 20;

  static LikelihoodSpec gaussian(double noise_variance, int quadrature_order = 20);
  static LikelihoodSpec probit(int quadrature_order = 20);
  double noise() const;
  void validate() const;
};

std::string to_string(LikelihoodFamily f);

/// Gaussian expectations of the log-likelihood and its first two f-derivatives.
struct Expectations {
  double ell = 0.0;    // E[log p(y|f)]
  double alpha = 0.0;  // E[d/df log p(y|f)]
  double beta = 0.0;   // E[-d2/df2 log p(y|f)]
};

/// Natural gradient of the expected log-likelihood, precision form:
/// g1 = beta*m + alpha, g2 = beta (clipped below at kBetaFloor).
struct SiteGradient {
  double g1 = 0.0;
  double g2 = 0.0;
  double ell = 0.0;

  /// Natural-convention site parameters (lambda1, lambda2) = (g1, -g2/2).
  double lambda1() const { return g1; }
  double lambda2() const { return -0.5 * g2; }
};

inline constexpr double kBetaFloor = 1e-10;

double log_density(const LikelihoodSpec& lik, double y, double f);

/// ell, alpha, beta under N(f; m, v). Closed form for Gaussian, quadrature for probit.
Expectations expectations(const LikelihoodSpec& lik, double y, double m, double v);

SiteGradient site_natgrad(double alpha, double beta, double m);
SiteGradient site_natgrad(const Expectations& e, double m);

/// log of the integral of p(y|f) N(f; m, v) df.
double predictive_log_density(const LikelihoodSpec& lik, double y, double m, double v);

/// Sum of E[log p(y_i|f_i)] over marginals (means, vars).
double expected_log_lik_sum(const LikelihoodSpec& lik, const VectorXd& y, const VectorXd& means,
                            const VectorXd& vars);

/// Throws if a target is outside the likelihood's domain.
void validate_targets(const LikelihoodSpec& lik, const VectorXd& y);

/// log Phi(z), accurate far into the lower tail.
double log_normal_cdf(double z);
/// phi(z) / Phi(z), accurate far into the lower tail.
double normal_hazard(double z);

}  // namespace dualgp
