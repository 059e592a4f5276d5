#include "dualgp/tvgp.hpp"

#include "dualgp/error.hpp"

#include <cmath>
#include <sstream>

namespace dualgp {

namespace {

constexpr double kLog2Pi = 1.83787706640934548356065947281123527972;

// Everything derived from (sites, K) through W = I + B^{1/2} K B^{1/2},
// B = diag(beta). A = K + B^{-1} = B^{-1/2} W B^{-1/2}.
struct SiteSystem {
  MatrixXd K;
  VectorXd sqrt_beta;
  PseudoTargets pt;
  CholeskyFactor W;
  VectorXd weights;  // A^{-1} y_tilde, so that m = K weights
};

SiteSystem build_system(const SiteParams& sites, const KernelSpec& kernel, const MatrixXd& X) {
  sites.validate();
  if (X.rows() != sites.size()) throw DimensionMismatch("t-VGP: sites and inputs disagree in n");
  SiteSystem s;
  s.K = eval_matrix(kernel, X, X);
  s.pt = pseudo_targets(sites);
  s.sqrt_beta = s.pt.beta.array().sqrt();
  MatrixXd W = s.sqrt_beta.asDiagonal() * s.K * s.sqrt_beta.asDiagonal();
  W.diagonal().array() += 1.0;
  try {
    s.W = jittered_cholesky(W, 1.0);
  } catch (const IndefiniteMatrix& e) {
    throw IndefiniteMatrix(std::string("t-VGP: singular K + diag(beta)^{-1}: ") + e.what());
  }
  const VectorXd sb_y = s.sqrt_beta.cwiseProduct(s.pt.y_tilde);
  s.weights = s.sqrt_beta.cwiseProduct(s.W.solve(sb_y));
  return s;
}

void check_targets(const MatrixXd& X, const VectorXd& y, const Hyperparams& hyper) {
  if (X.rows() != y.size()) throw DimensionMismatch("inputs and targets disagree in n");
  validate_targets(hyper.likelihood, y);
}

}  // namespace

SiteParams SiteParams::zeros(Eigen::Index n) {
  return {VectorXd::Zero(n), VectorXd::Constant(n, -0.5 * kBetaFloor)};
}

void SiteParams::validate() const {
  if (lambda1.size() != lambda2.size()) throw DimensionMismatch("SiteParams: size mismatch");
  for (Eigen::Index i = 0; i < lambda2.size(); ++i)
    if (!(lambda2(i) < 0.0) || !std::isfinite(lambda1(i))) {
      std::ostringstream os;
      os << "SiteParams: site " << i << " has lambda2 = " << lambda2(i) << " (must be < 0)";
      throw InvalidArgument(os.str());
    }
}

PseudoTargets pseudo_targets(const SiteParams& sites) {
  PseudoTargets pt;
  pt.beta = -2.0 * sites.lambda2;
  pt.y_tilde = sites.lambda1.cwiseQuotient(pt.beta);
  return pt;
}

SiteParams conjugate_sites(const VectorXd& y, double noise_variance) {
  return {y / noise_variance, VectorXd::Constant(y.size(), -0.5 / noise_variance)};
}

GaussianMoments tvgp_posterior(const SiteParams& sites, const KernelSpec& kernel,
                               const MatrixXd& X) {
  const SiteSystem s = build_system(sites, kernel, X);
  // S = K - K A^{-1} K = K - V^T V with V = L^{-1} B^{1/2} K
  const MatrixXd V = s.W.solve_lower(MatrixXd(s.sqrt_beta.asDiagonal() * s.K));
  MatrixXd S = s.K - V.transpose() * V;
  S = 0.5 * (S + S.transpose());
  return GaussianMoments(s.K * s.weights, std::move(S));
}

Marginals tvgp_marginals(const SiteParams& sites, const KernelSpec& kernel, const MatrixXd& X) {
  const SiteSystem s = build_system(sites, kernel, X);
  const MatrixXd V = s.W.solve_lower(MatrixXd(s.sqrt_beta.asDiagonal() * s.K));
  Marginals out;
  out.mean = s.K * s.weights;
  out.var = s.K.diagonal() - V.colwise().squaredNorm().transpose();
  return out;
}

Marginals tvgp_predict(const SiteParams& sites, const KernelSpec& kernel, const MatrixXd& X,
                       const MatrixXd& Xstar) {
  const SiteSystem s = build_system(sites, kernel, X);
  const MatrixXd Kfs = eval_matrix(kernel, X, Xstar);
  const MatrixXd V = s.W.solve_lower(MatrixXd(s.sqrt_beta.asDiagonal() * Kfs));
  Marginals out;
  out.mean = Kfs.transpose() * s.weights;
  out.var = eval_diag(kernel, Xstar) - V.colwise().squaredNorm().transpose();
  return out;
}

std::vector<SiteGradient> tvgp_site_gradients(const SiteParams& sites, const MatrixXd& X,
                                              const VectorXd& y, const Hyperparams& hyper) {
  check_targets(X, y, hyper);
  const Marginals q = tvgp_marginals(sites, hyper.kernel, X);
  std::vector<SiteGradient> g(static_cast<std::size_t>(y.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double v = std::max(q.var(i), 1e-12);
    g[static_cast<std::size_t>(i)] =
        site_natgrad(expectations(hyper.likelihood, y(i), q.mean(i), v), q.mean(i));
  }
  return g;
}

SiteParams tvgp_estep(SiteParams sites, const MatrixXd& X, const VectorXd& y,
                      const Hyperparams& hyper, double r, int iters) {
  if (!(r >= 0.0 && r <= 1.0)) throw InvalidArgument("tvgp_estep: step size must lie in [0, 1]");
  if (r == 0.0) return sites;
  for (int k = 0; k < iters; ++k) {
    const auto g = tvgp_site_gradients(sites, X, y, hyper);
    for (Eigen::Index i = 0; i < sites.size(); ++i) {
      const SiteGradient& gi = g[static_cast<std::size_t>(i)];
      sites.lambda1(i) = (1.0 - r) * sites.lambda1(i) + r * gi.lambda1();
      sites.lambda2(i) = (1.0 - r) * sites.lambda2(i) + r * gi.lambda2();
    }
  }
  return sites;
}

double tvgp_fixed_point_residual(const SiteParams& sites, const MatrixXd& X, const VectorXd& y,
                                 const Hyperparams& hyper) {
  const auto g = tvgp_site_gradients(sites, X, y, hyper);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < sites.size(); ++i) {
    const SiteGradient& gi = g[static_cast<std::size_t>(i)];
    worst = std::max({worst, std::abs(sites.lambda1(i) - gi.lambda1()),
                      std::abs(sites.lambda2(i) - gi.lambda2())});
  }
  return worst;
}

double tvgp_logZ(const SiteParams& sites, const KernelSpec& kernel, const MatrixXd& X) {
  const SiteSystem s = build_system(sites, kernel, X);
  const auto n = static_cast<double>(sites.size());
  // log|A| = log|W| - sum log beta;  y~^T A^{-1} y~ = ||L^{-1} B^{1/2} y~||^2
  const double logdet_A = s.W.log_det() - s.pt.beta.array().log().sum();
  const double quad = s.W.solve_lower(VectorXd(s.sqrt_beta.cwiseProduct(s.pt.y_tilde))).squaredNorm();
  return -0.5 * n * kLog2Pi - 0.5 * logdet_A - 0.5 * quad;
}

double tvgp_kl(const SiteParams& sites, const KernelSpec& kernel, const MatrixXd& X) {
  const SiteSystem s = build_system(sites, kernel, X);
  const auto n = static_cast<double>(sites.size());
  const Eigen::Index N = sites.size();
  // tr(K^{-1} S) = tr(W^{-1}), m^T K^{-1} m = w^T K w, log|K| - log|S| = log|W|
  const double trace_term = s.W.solve_lower(MatrixXd(MatrixXd::Identity(N, N))).squaredNorm();
  const double maha = s.weights.dot(s.K * s.weights);
  return 0.5 * (trace_term + maha - n + s.W.log_det());
}

double tvgp_elbo(const SiteParams& sites, const MatrixXd& X, const VectorXd& y,
                 const Hyperparams& hyper) {
  check_targets(X, y, hyper);
  const Marginals q = tvgp_marginals(sites, hyper.kernel, X);
  const VectorXd var = q.var.cwiseMax(1e-12);
  return expected_log_lik_sum(hyper.likelihood, y, q.mean, var) -
         tvgp_kl(sites, hyper.kernel, X);
}

double tvgp_mstep_objective(const SiteParams& sites, const MatrixXd& X, const VectorXd& y,
                            const Hyperparams& hyper) {
  check_targets(X, y, hyper);
  const double logZ = tvgp_logZ(sites, hyper.kernel, X);
  const Marginals q = tvgp_marginals(sites, hyper.kernel, X);
  const PseudoTargets pt = pseudo_targets(sites);
  // c(theta) = sum_i E_q[log p(y_i|f_i)] - E_q[log N(y~_i; f_i, 1/beta_i)]
  double c = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double v = std::max(q.var(i), 1e-12);
    const double r = pt.y_tilde(i) - q.mean(i);
    const double e_log_site =
        0.5 * (std::log(pt.beta(i)) - kLog2Pi) - 0.5 * pt.beta(i) * (r * r + v);
    c += expectations(hyper.likelihood, y(i), q.mean(i), v).ell - e_log_site;
  }
  return logZ + c;
}

double tvgp_standard_mstep_objective(const GaussianMoments& q, const MatrixXd& X,
                                     const VectorXd& y, const Hyperparams& hyper) {
  check_targets(X, y, hyper);
  if (q.dim() != X.rows()) throw DimensionMismatch("standard objective: q and X disagree in n");
  const CholeskyFactor Kf = jittered_cholesky(eval_matrix(hyper.kernel, X, X));
  const VectorXd var = q.cov().diagonal().cwiseMax(1e-12);
  return expected_log_lik_sum(hyper.likelihood, y, q.mean(), var) -
         kl_gaussian(q, VectorXd::Zero(q.dim()), Kf);
}

double exact_gp_logml(const MatrixXd& X, const VectorXd& y, const KernelSpec& kernel,
                      double noise_variance) {
  if (X.rows() != y.size()) throw DimensionMismatch("exact_gp_logml: X/y size mismatch");
  MatrixXd A = eval_matrix(kernel, X, X);
  A.diagonal().array() += noise_variance;
  const CholeskyFactor L = jittered_cholesky(A);
  const double quad = L.solve_lower(y).squaredNorm();
  return -0.5 * quad - 0.5 * L.log_det() - 0.5 * static_cast<double>(y.size()) * kLog2Pi;
}

VectorXd exact_gp_logml_grad(const MatrixXd& X, const VectorXd& y, const KernelSpec& kernel,
                             double noise_variance) {
  if (X.rows() != y.size()) throw DimensionMismatch("exact_gp_logml_grad: X/y size mismatch");
  MatrixXd A = eval_matrix(kernel, X, X);
  A.diagonal().array() += noise_variance;
  const CholeskyFactor L = jittered_cholesky(A);
  const VectorXd alpha = L.solve(y);
  // d/dtheta = 1/2 tr((alpha alpha^T - A^{-1}) dA/dtheta)
  const MatrixXd inner = alpha * alpha.transpose() - L.inverse();
  VectorXd g(3);
  g(0) = 0.5 * (inner.cwiseProduct(eval_grad(kernel, X, X, KernelParam::LogLengthscale))).sum();
  g(1) = 0.5 * (inner.cwiseProduct(eval_grad(kernel, X, X, KernelParam::LogVariance))).sum();
  g(2) = 0.5 * noise_variance * inner.trace();
  return g;
}

}  // namespace dualgp
