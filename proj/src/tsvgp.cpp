#include "dualgp/tsvgp.hpp"

#include "dualgp/error.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numeric>
#include <sstream>

namespace dualgp {

namespace {

constexpr double kLog2Pi = 1.83787706640934548356065947281123527972;
constexpr double kVarFloor = 1e-12;

bool same_kernel(const KernelSpec& a, const KernelSpec& b) {
  return a.family == b.family && a.log_lengthscale == b.log_lengthscale &&
         a.log_variance == b.log_variance;
}

std::shared_ptr<const SparseFactor> build_factor(const InducingInputs& Z, const TiedSites& tied,
                                                 const KernelSpec& kernel) {
  if (tied.size() != Z.size()) throw DimensionMismatch("t-SVGP: tied state and Z disagree in m");
  auto f = std::make_shared<SparseFactor>();
  f->kernel = kernel;
  f->Kuu = eval_matrix(kernel, Z.Z(), Z.Z());
  f->kuu = jittered_cholesky(f->Kuu);
  f->Kuu.diagonal().array() += f->kuu.jitter;
  // Working in the whitened basis keeps C well conditioned when Kuu is not.
  const MatrixXd half = f->kuu.solve_lower(tied.Lambda_bar2);
  MatrixXd C = f->kuu.solve_lower(MatrixXd(half.transpose()));
  C = 0.5 * (C + C.transpose());
  C.diagonal().array() += 1.0;
  try {
    f->c = jittered_cholesky(C, 1.0);
  } catch (const IndefiniteMatrix& e) {
    throw IndefiniteMatrix(std::string("t-SVGP: Kuu + Lambda_bar2 is not SPD: ") + e.what());
  }
  f->w = f->kuu.solve_lower(tied.lambda_bar1);
  return f;
}

void check_targets(const MatrixXd& X, const VectorXd& y, const Hyperparams& hyper) {
  if (X.rows() != y.size()) throw DimensionMismatch("inputs and targets disagree in n");
  validate_targets(hyper.likelihood, y);
}

MatrixXd gather_rows(const MatrixXd& X, const std::vector<Eigen::Index>& idx) {
  MatrixXd out(static_cast<Eigen::Index>(idx.size()), X.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= X.rows()) throw InvalidArgument("batch index out of range");
    out.row(static_cast<Eigen::Index>(k)) = X.row(idx[k]);
  }
  return out;
}

}  // namespace

TiedSites TiedSites::zeros(Eigen::Index m) {
  return {VectorXd::Zero(m), MatrixXd::Zero(m, m)};
}

void TiedSites::validate() const {
  const Eigen::Index m = lambda_bar1.size();
  if (Lambda_bar2.rows() != m || Lambda_bar2.cols() != m)
    throw DimensionMismatch("TiedSites: Lambda_bar2 must be m x m");
  if (!is_symmetric(Lambda_bar2)) throw InvalidArgument("TiedSites: Lambda_bar2 not symmetric");
  if (m == 0) return;
  const double tol = 1e-10 * std::abs(Lambda_bar2.trace()) / static_cast<double>(m);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(Lambda_bar2, Eigen::EigenvaluesOnly);
  if (es.eigenvalues()(0) < -tol) {
    std::ostringstream os;
    os << "TiedSites: Lambda_bar2 has eigenvalue " << es.eigenvalues()(0) << " (not PSD)";
    throw InvalidArgument(os.str());
  }
}

TiedSites tied_from_sites(const SiteParams& sites, const InducingInputs& Z,
                          const KernelSpec& kernel, const MatrixXd& X) {
  sites.validate();
  if (X.rows() != sites.size()) throw DimensionMismatch("tied_from_sites: sites and X disagree");
  const MatrixXd Kux = eval_matrix(kernel, Z.Z(), X);
  const VectorXd beta = -2.0 * sites.lambda2;
  TiedSites t;
  t.lambda_bar1 = Kux * sites.lambda1;
  t.Lambda_bar2 = Kux * beta.asDiagonal() * Kux.transpose();
  t.Lambda_bar2 = 0.5 * (t.Lambda_bar2 + t.Lambda_bar2.transpose());
  return t;
}

SparseState::SparseState(InducingInputs inducing)
    : inducing_(std::move(inducing)), tied_(TiedSites::zeros(inducing_.size())) {}

SparseState::SparseState(InducingInputs inducing, TiedSites tied)
    : inducing_(std::move(inducing)), tied_(std::move(tied)) {
  if (tied_.size() != inducing_.size())
    throw DimensionMismatch("SparseState: tied state and Z disagree in m");
  tied_.validate();
}

void SparseState::set_tied(TiedSites tied) {
  if (tied.size() != inducing_.size())
    throw DimensionMismatch("SparseState: tied state and Z disagree in m");
  tied_ = std::move(tied);
  cache_.reset();
}

std::shared_ptr<const SparseFactor> SparseState::factor(const KernelSpec& kernel) const {
  if (cache_valid_for(kernel)) return cache_;
  return build_factor(inducing_, tied_, kernel);
}

void SparseState::refresh(const KernelSpec& kernel) {
  cache_ = build_factor(inducing_, tied_, kernel);
}

bool SparseState::cache_valid_for(const KernelSpec& kernel) const {
  return cache_ && same_kernel(cache_->kernel, kernel);
}

void SparseState::enable_shadow(Eigen::Index n) { shadow_ = SiteParams::zeros(n); }

GaussianMoments tsvgp_moments(const SparseState& state, const KernelSpec& kernel) {
  const auto f = state.factor(kernel);
  const MatrixXd half = f->c.solve_lower(MatrixXd(f->kuu.lower.transpose()));
  MatrixXd S = half.transpose() * half;
  S = 0.5 * (S + S.transpose());
  return GaussianMoments(f->kuu.lower * f->c.solve(f->w), std::move(S));
}

Marginals tsvgp_marginals(const SparseState& state, const KernelSpec& kernel,
                          const MatrixXd& Xstar) {
  const auto f = state.factor(kernel);
  const MatrixXd Kus = eval_matrix(kernel, state.inducing().Z(), Xstar);
  const VectorXd kss = eval_diag(kernel, Xstar);
  Marginals out;
  const MatrixXd V = f->kuu.solve_lower(Kus);
  out.mean = V.transpose() * f->c.solve(f->w);
  out.var = kss - V.colwise().squaredNorm().transpose() +
            f->c.solve_lower(V).colwise().squaredNorm().transpose();
  for (Eigen::Index i = 0; i < out.var.size(); ++i) {
    if (out.var(i) < -1e-10 * std::max(1.0, kss(i))) {
      std::ostringstream os;
      os << "t-SVGP: negative predictive variance " << out.var(i) << " at point " << i;
      throw IndefiniteMatrix(os.str());
    }
    out.var(i) = std::max(out.var(i), kVarFloor);
  }
  return out;
}

SparseState tsvgp_estep_step(const SparseState& state, const MatrixXd& X, const VectorXd& y,
                             const std::vector<Eigen::Index>& batch, const Hyperparams& hyper,
                             double r) {
  if (batch.empty()) throw InvalidArgument("t-SVGP E-step: empty batch");
  if (!(r >= 0.0 && r <= 1.0)) throw InvalidArgument("t-SVGP E-step: step size must lie in [0, 1]");
  check_targets(X, y, hyper);
  if (r == 0.0) return state;

  const MatrixXd Xb = gather_rows(X, batch);
  const Marginals q = tsvgp_marginals(state, hyper.kernel, Xb);
  const auto nb = static_cast<Eigen::Index>(batch.size());
  VectorXd g1(nb), g2(nb);
  for (Eigen::Index k = 0; k < nb; ++k) {
    const double yk = y(batch[static_cast<std::size_t>(k)]);
    const SiteGradient g =
        site_natgrad(expectations(hyper.likelihood, yk, q.mean(k), q.var(k)), q.mean(k));
    g1(k) = g.g1;
    g2(k) = g.g2;
  }

  const MatrixXd Kub = eval_matrix(hyper.kernel, state.inducing().Z(), Xb);
  TiedSites next;
  next.lambda_bar1 = (1.0 - r) * state.tied().lambda_bar1 + r * (Kub * g1);
  next.Lambda_bar2 = (1.0 - r) * state.tied().Lambda_bar2 +
                     r * (Kub * g2.asDiagonal() * Kub.transpose());
  next.Lambda_bar2 = 0.5 * (next.Lambda_bar2 + next.Lambda_bar2.transpose());

  SparseState out = state;
  out.set_tied(std::move(next));
  if (auto& sh = out.shadow()) {
    if (sh->size() != X.rows()) throw DimensionMismatch("t-SVGP: shadow sites and X disagree");
    sh->lambda1 *= (1.0 - r);
    sh->lambda2 *= (1.0 - r);
    for (Eigen::Index k = 0; k < nb; ++k) {
      const Eigen::Index i = batch[static_cast<std::size_t>(k)];
      // a repeated index accumulates, mirroring the tied sum
      sh->lambda1(i) += r * g1(k);
      sh->lambda2(i) += -0.5 * r * g2(k);
    }
  }
  out.refresh(hyper.kernel);
  return out;
}

SparseState tsvgp_estep_full(const SparseState& state, const MatrixXd& X, const VectorXd& y,
                             const Hyperparams& hyper, double r) {
  std::vector<Eigen::Index> all(static_cast<std::size_t>(X.rows()));
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  return tsvgp_estep_step(state, X, y, all, hyper, r);
}

double tsvgp_kl(const SparseState& state, const KernelSpec& kernel) {
  const auto f = state.factor(kernel);
  const auto m = static_cast<double>(state.inducing().size());
  // whitened: q(v) = N(C^{-1} w, C^{-1}) against N(0, I)
  const VectorXd mean = f->c.solve(f->w);
  return 0.5 * (f->c.inverse().trace() - m + mean.squaredNorm() + f->c.log_det());
}

double tsvgp_elbo(const SparseState& state, const MatrixXd& X, const VectorXd& y,
                  const Hyperparams& hyper) {
  check_targets(X, y, hyper);
  const Marginals q = tsvgp_marginals(state, hyper.kernel, X);
  return expected_log_lik_sum(hyper.likelihood, y, q.mean, q.var) -
         tsvgp_kl(state, hyper.kernel);
}

double tsvgp_log_partition(const SparseState& state, const KernelSpec& kernel) {
  const TiedSites& t = state.tied();
  if (t.Lambda_bar2.isZero(0.0))
    throw InvalidArgument("sparse log-partition: Lambda_bar2 is zero; take an E-step first");
  const auto f = state.factor(kernel);
  const auto m = static_cast<double>(t.size());
  MatrixXd Le = t.Lambda_bar2;
  Le.diagonal().array() += 1e-8 * Le.diagonal().mean();
  const CholeskyFactor Lf = jittered_cholesky(Le);
  MatrixXd KL = f->Kuu + Lf.reconstruct();
  const CholeskyFactor KLf = jittered_cholesky(KL);
  // lambda^T L^{-1} Kuu (Kuu + L)^{-1} lambda
  const double quad = t.lambda_bar1.dot(Lf.solve(VectorXd(f->Kuu * KLf.solve(t.lambda_bar1))));
  return -0.5 * m * kLog2Pi - 0.5 * (f->kuu.log_det() - Lf.log_det() + KLf.log_det()) -
         0.5 * quad;
}

double tsvgp_mstep_objective(const SparseState& state, const MatrixXd& X, const VectorXd& y,
                             const Hyperparams& hyper) {
  check_targets(X, y, hyper);
  if (state.tied().Lambda_bar2.isZero(0.0))
    throw InvalidArgument("M-step objective: Lambda_bar2 is zero; take an E-step first");
  // Whitened evaluation with Kuu = L L^T, A = L^{-1} Lambda_bar2 L^{-T}, w = L^{-1} lambda_bar1.
  // Combining log Z with the site expectation (the unnormalized site's normalizer cancels) gives
  //   -1/2 ln|I + A| - 1/2 |(I + A)^{-1} w|^2 + 1/2 tr((I + A)^{-1} A) + sum_i E_q[log p(y_i | f_i)].
  // With per-point sites the trial kernel re-ties them, and A, w are built from V = L^{-1} Kuf
  // directly so Kuu is never squared.
  const auto kuu = state.factor(hyper.kernel);
  const CholeskyFactor& L = kuu->kuu;
  const MatrixXd V = L.solve_lower(eval_matrix(hyper.kernel, state.inducing().Z(), X));
  const auto m = state.inducing().size();
  MatrixXd A;
  VectorXd w;
  if (const auto& sh = state.shadow()) {
    if (sh->size() != X.rows()) throw DimensionMismatch("t-SVGP: shadow sites and X disagree");
    const VectorXd beta = -2.0 * sh->lambda2;
    w = V * sh->lambda1;
    A = V * beta.asDiagonal() * V.transpose();
  } else {
    w = L.solve_lower(state.tied().lambda_bar1);
    const MatrixXd half = L.solve_lower(state.tied().Lambda_bar2);
    A = L.solve_lower(MatrixXd(half.transpose()));
  }
  A = 0.5 * (A + A.transpose());
  MatrixXd C = A;
  C.diagonal().array() += 1.0;
  const CholeskyFactor Cf = jittered_cholesky(C, 1.0);
  const VectorXd Cw = Cf.solve(w);
  const MatrixXd Cinv = Cf.inverse();

  Marginals q;
  q.mean = V.transpose() * Cw;
  const MatrixXd CV = Cf.solve_lower(V);
  q.var = (eval_diag(hyper.kernel, X) - V.colwise().squaredNorm().transpose() +
           CV.colwise().squaredNorm().transpose())
              .cwiseMax(1e-12);
  const double ell = expected_log_lik_sum(hyper.likelihood, y, q.mean, q.var);
  const double trace_term = static_cast<double>(m) - Cinv.trace();
  return -0.5 * Cf.log_det() - 0.5 * Cw.squaredNorm() + 0.5 * trace_term + ell;
}

double tsvgp_fixed_point_residual(const SparseState& state, const MatrixXd& X,
                                  const VectorXd& y, const Hyperparams& hyper) {
  const auto& sh = state.shadow();
  if (!sh) throw InvalidArgument("fixed-point residual needs the untied shadow sites");
  check_targets(X, y, hyper);
  if (sh->size() != X.rows()) throw DimensionMismatch("t-SVGP: shadow sites and X disagree");
  const Marginals q = tsvgp_marginals(state, hyper.kernel, X);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const SiteGradient g =
        site_natgrad(expectations(hyper.likelihood, y(i), q.mean(i), q.var(i)), q.mean(i));
    worst = std::max({worst, std::abs(sh->lambda1(i) - g.lambda1()),
                      std::abs(sh->lambda2(i) - g.lambda2())});
  }
  return worst;
}

}  // namespace dualgp
