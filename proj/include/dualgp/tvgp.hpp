#pragma once

#include "dualgp/gaussian.hpp"
#include "dualgp/hyperparams.hpp"
#include "dualgp/marginals.hpp"

#include <vector>

namespace dualgp {

/// Per-datapoint dual parameters in natural convention:
/// t_i(f) = exp(lambda1_i f + lambda2_i f^2), lambda2_i < 0.
struct SiteParams {
  VectorXd lambda1;
  VectorXd lambda2;

  /// lambda1 = 0, lambda2 at the clip floor -kBetaFloor/2 (q = prior).
  static SiteParams zeros(Eigen::Index n);
  Eigen::Index size() const { return lambda1.size(); }
  /// Throws unless sizes agree and every lambda2 is strictly negative.
  void validate() const;
};

/// Gaussian pseudo-observations equivalent to the sites:
/// y_tilde = -lambda1 / (2 lambda2), beta = -2 lambda2.
struct PseudoTargets {
  VectorXd y_tilde;
  VectorXd beta;
};

PseudoTargets pseudo_targets(const SiteParams& sites);

/// Sites (y/s2, -1/(2 s2)) that reproduce a Gaussian likelihood exactly.
SiteParams conjugate_sites(const VectorXd& y, double noise_variance);

/// Posterior q(f) = N(m, S) with S^{-1} = K^{-1} + diag(beta), S^{-1} m = lambda1.
GaussianMoments tvgp_posterior(const SiteParams& sites, const KernelSpec& kernel,
                               const MatrixXd& X);

/// Diagonal of tvgp_posterior without forming a factor of S.
Marginals tvgp_marginals(const SiteParams& sites, const KernelSpec& kernel, const MatrixXd& X);

/// Posterior predictive marginals of f at new inputs.
Marginals tvgp_predict(const SiteParams& sites, const KernelSpec& kernel, const MatrixXd& X,
                       const MatrixXd& Xstar);

/// Natural gradients g_i of E_q[log p(y_i|f_i)] at the current marginals.
std::vector<SiteGradient> tvgp_site_gradients(const SiteParams& sites, const MatrixXd& X,
                                              const VectorXd& y, const Hyperparams& hyper);

/// `iters` natural-gradient site updates lambda <- (1-r) lambda + r g at fixed theta.
SiteParams tvgp_estep(SiteParams sites, const MatrixXd& X, const VectorXd& y,
                      const Hyperparams& hyper, double r, int iters);

/// max_i |lambda_i - g_i| in natural convention.
double tvgp_fixed_point_residual(const SiteParams& sites, const MatrixXd& X, const VectorXd& y,
                                 const Hyperparams& hyper);

/// Log-partition: log N(y_tilde; 0, diag(beta)^{-1} + K(theta)).
double tvgp_logZ(const SiteParams& sites, const KernelSpec& kernel, const MatrixXd& X);

/// KL(q || p_theta) of the site posterior, without inverting K.
double tvgp_kl(const SiteParams& sites, const KernelSpec& kernel, const MatrixXd& X);

/// Standard ELBO of the site posterior at theta.
double tvgp_elbo(const SiteParams& sites, const MatrixXd& X, const VectorXd& y,
                 const Hyperparams& hyper);

/// Proposed M-step objective log Z(theta) + c(theta) with the prior left theta-dependent.
double tvgp_mstep_objective(const SiteParams& sites, const MatrixXd& X, const VectorXd& y,
                            const Hyperparams& hyper);

/// Standard M-step objective: ELBO of a frozen q(f) against the prior at theta.
double tvgp_standard_mstep_objective(const GaussianMoments& q, const MatrixXd& X,
                                     const VectorXd& y, const Hyperparams& hyper);

/// Exact GP-regression log marginal likelihood log N(y; 0, K + s2 I).
double exact_gp_logml(const MatrixXd& X, const VectorXd& y, const KernelSpec& kernel,
                      double noise_variance);

/// Analytic gradient of exact_gp_logml w.r.t. (log l, log s2_k, log s2_noise).
VectorXd exact_gp_logml_grad(const MatrixXd& X, const VectorXd& y, const KernelSpec& kernel,
                             double noise_variance);

}  // namespace dualgp
