#include "dualgp/qsvgp.hpp"

#include "dualgp/error.hpp"

#include <numeric>
#include <sstream>

namespace dualgp {

namespace {

struct PriorFactor {
  MatrixXd Kuu;  // jittered
  CholeskyFactor chol;
};

PriorFactor prior_factor(const InducingInputs& Z, const KernelSpec& kernel) {
  PriorFactor p;
  p.Kuu = eval_matrix(kernel, Z.Z(), Z.Z());
  p.chol = jittered_cholesky(p.Kuu);
  p.Kuu.diagonal().array() += p.chol.jitter;
  return p;
}

void check_targets(const MatrixXd& X, const VectorXd& y, const Hyperparams& hyper) {
  if (X.rows() != y.size()) throw DimensionMismatch("inputs and targets disagree in n");
  validate_targets(hyper.likelihood, y);
}

}  // namespace

GaussianNatural prior_natural(const InducingInputs& Z, const KernelSpec& kernel) {
  const PriorFactor p = prior_factor(Z, kernel);
  MatrixXd P = p.chol.inverse();
  P = 0.5 * (P + P.transpose());
  return {VectorXd::Zero(Z.size()), -0.5 * P};
}

QState QState::prior(InducingInputs Z, const KernelSpec& kernel) {
  GaussianNatural eta = prior_natural(Z, kernel);
  return {std::move(eta), std::move(Z)};
}

GaussianMoments qsvgp_moments(const QState& state) { return to_moments(state.eta); }

Marginals sparse_marginals(const GaussianMoments& qu, const InducingInputs& Z,
                           const KernelSpec& kernel, const MatrixXd& Xstar) {
  if (qu.dim() != Z.size()) throw DimensionMismatch("q(u) and Z disagree in m");
  const PriorFactor p = prior_factor(Z, kernel);
  const MatrixXd Kus = eval_matrix(kernel, Z.Z(), Xstar);
  const MatrixXd A = p.chol.solve(Kus);  // columns a_i = Kuu^{-1} k_ui
  const MatrixXd SA = qu.cov() * A;
  Marginals out;
  out.mean = A.transpose() * qu.mean();
  out.var = eval_diag(kernel, Xstar) - Kus.cwiseProduct(A).colwise().sum().transpose() +
            A.cwiseProduct(SA).colwise().sum().transpose();
  for (Eigen::Index i = 0; i < out.var.size(); ++i) {
    if (out.var(i) < -1e-10 * std::max(1.0, kernel.variance())) {
      std::ostringstream os;
      os << "SVGP: negative predictive variance " << out.var(i) << " at point " << i;
      throw IndefiniteMatrix(os.str());
    }
    out.var(i) = std::max(out.var(i), 1e-12);
  }
  return out;
}

Marginals qsvgp_marginals(const QState& state, const KernelSpec& kernel, const MatrixXd& Xstar) {
  return sparse_marginals(qsvgp_moments(state), state.inducing, kernel, Xstar);
}

QState qsvgp_estep_step(const QState& state, const MatrixXd& X, const VectorXd& y,
                        const std::vector<Eigen::Index>& batch, const Hyperparams& hyper,
                        double rho) {
  if (batch.empty()) throw InvalidArgument("q-SVGP E-step: empty batch");
  if (!(rho >= 0.0 && rho <= 1.0)) throw InvalidArgument("q-SVGP E-step: step size must lie in [0, 1]");
  check_targets(X, y, hyper);
  if (rho == 0.0) return state;

  const InducingInputs& Z = state.inducing;
  const PriorFactor p = prior_factor(Z, hyper.kernel);
  const GaussianMoments qu = to_moments(state.eta);

  const auto nb = static_cast<Eigen::Index>(batch.size());
  MatrixXd Xb(nb, X.cols());
  for (Eigen::Index k = 0; k < nb; ++k) {
    const Eigen::Index i = batch[static_cast<std::size_t>(k)];
    if (i < 0 || i >= X.rows()) throw InvalidArgument("batch index out of range");
    Xb.row(k) = X.row(i);
  }
  const MatrixXd Kub = eval_matrix(hyper.kernel, Z.Z(), Xb);
  const MatrixXd A = p.chol.solve(Kub);
  const VectorXd means = A.transpose() * qu.mean();
  const VectorXd vars = (eval_diag(hyper.kernel, Xb) -
                         Kub.cwiseProduct(A).colwise().sum().transpose() +
                         A.cwiseProduct(qu.cov() * A).colwise().sum().transpose())
                            .cwiseMax(1e-12);

  VectorXd g1(nb), g2(nb);
  for (Eigen::Index k = 0; k < nb; ++k) {
    const double yk = y(batch[static_cast<std::size_t>(k)]);
    const SiteGradient g =
        site_natgrad(expectations(hyper.likelihood, yk, means(k), vars(k)), means(k));
    g1(k) = g.g1;
    g2(k) = g.g2;
  }

  MatrixXd prior_prec = p.chol.inverse();
  prior_prec = 0.5 * (prior_prec + prior_prec.transpose());
  const VectorXd G1 = A * g1;
  const MatrixXd G2 = -0.5 * (A * g2.asDiagonal() * A.transpose());

  QState out{GaussianNatural{}, Z};
  out.eta.eta1 = (1.0 - rho) * state.eta.eta1 + rho * G1;
  out.eta.eta2 = (1.0 - rho) * state.eta.eta2 + rho * (-0.5 * prior_prec + G2);
  out.eta.eta2 = 0.5 * (out.eta.eta2 + out.eta.eta2.transpose());

  Eigen::LLT<MatrixXd> llt(-2.0 * out.eta.eta2);
  if (llt.info() != Eigen::Success) {
    std::ostringstream os;
    os << "step overshoot: -2 eta2 not SPD after natural-gradient step with rho = " << rho;
    throw StepOvershoot(os.str());
  }
  return out;
}

QState qsvgp_estep_full(const QState& state, const MatrixXd& X, const VectorXd& y,
                        const Hyperparams& hyper, double rho) {
  std::vector<Eigen::Index> all(static_cast<std::size_t>(X.rows()));
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  return qsvgp_estep_step(state, X, y, all, hyper, rho);
}

double sparse_standard_objective(const GaussianMoments& qu, const InducingInputs& Z,
                                 const MatrixXd& X, const VectorXd& y, const Hyperparams& hyper) {
  check_targets(X, y, hyper);
  const Marginals q = sparse_marginals(qu, Z, hyper.kernel, X);
  const PriorFactor p = prior_factor(Z, hyper.kernel);
  return expected_log_lik_sum(hyper.likelihood, y, q.mean, q.var) -
         kl_gaussian(qu, VectorXd::Zero(Z.size()), p.chol);
}

double qsvgp_standard_mstep_objective(const QState& state, const MatrixXd& X, const VectorXd& y,
                                      const Hyperparams& hyper) {
  return sparse_standard_objective(qsvgp_moments(state), state.inducing, X, y, hyper);
}

TiedSites tied_from_qstate(const QState& state, const KernelSpec& kernel) {
  const PriorFactor p = prior_factor(state.inducing, kernel);
  MatrixXd prior_prec = p.chol.inverse();
  // Kuu^{-1} lb1 = eta1; Kuu^{-1} Lb2 Kuu^{-1} = -2 eta2 - Kuu^{-1}
  const MatrixXd site_prec = -2.0 * state.eta.eta2 - prior_prec;
  TiedSites t;
  t.lambda_bar1 = p.Kuu * state.eta.eta1;
  t.Lambda_bar2 = p.Kuu * site_prec * p.Kuu;
  t.Lambda_bar2 = 0.5 * (t.Lambda_bar2 + t.Lambda_bar2.transpose());
  return t;
}

}  // namespace dualgp
