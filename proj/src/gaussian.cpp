#include "dualgp/gaussian.hpp"

#include "dualgp/error.hpp"

#include <cmath>
#include <sstream>

namespace dualgp {

namespace {

thread_local double g_jitter_watermark = 0.0;

bool try_factor(const MatrixXd& A, double jitter, MatrixXd& out) {
  Eigen::LLT<MatrixXd> llt(A.rows());
  if (jitter > 0.0) {
    MatrixXd B = A;
    B.diagonal().array() += jitter;
    llt.compute(B);
  } else {
    llt.compute(A);
  }
  if (llt.info() != Eigen::Success) return false;
  out = llt.matrixL();
  // LLT only checks pivots for <= 0; reject factors with non-finite entries.
  return out.allFinite();
}

double default_scale(const MatrixXd& A) {
  if (A.rows() == 0) return 1.0;
  const double s = A.diagonal().mean();
  return (std::isfinite(s) && s > 0.0) ? s : 1.0;
}

[[noreturn]] void throw_degenerate(const MatrixXd& A, const std::string& what) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(A);
  std::size_t direction = 0;
  double lambda = 0.0;
  if (es.info() == Eigen::Success && A.rows() > 0) {
    lambda = es.eigenvalues()(0);
    Eigen::Index idx = 0;
    es.eigenvectors().col(0).cwiseAbs().maxCoeff(&idx);
    direction = static_cast<std::size_t>(idx);
  }
  std::ostringstream os;
  os << "degenerate Gaussian: " << what << " is not positive definite (eigenvalue " << lambda
     << " along coordinate " << direction << ")";
  throw DegenerateGaussian(os.str(), direction, lambda);
}

CholeskyFactor factor_spd(const MatrixXd& A, const char* what) {
  CholeskyFactor f;
  const double scale = default_scale(A);
  for (double eps : {0.0, kJitterLadder[1]}) {
    if (try_factor(A, eps * scale, f.lower)) {
      f.jitter = eps * scale;
      return f;
    }
  }
  throw_degenerate(A, what);
}

MatrixXd symmetrize(const MatrixXd& A) { return 0.5 * (A + A.transpose()); }

}  // namespace

MatrixXd CholeskyFactor::solve(const MatrixXd& b) const {
  const auto L = lower.triangularView<Eigen::Lower>();
  return L.transpose().solve(L.solve(b));
}

VectorXd CholeskyFactor::solve(const VectorXd& b) const {
  const auto L = lower.triangularView<Eigen::Lower>();
  return L.transpose().solve(L.solve(b));
}

MatrixXd CholeskyFactor::solve_lower(const MatrixXd& b) const {
  return lower.triangularView<Eigen::Lower>().solve(b);
}

VectorXd CholeskyFactor::solve_lower(const VectorXd& b) const {
  return lower.triangularView<Eigen::Lower>().solve(b);
}

double CholeskyFactor::log_det() const {
  return 2.0 * lower.diagonal().array().log().sum();
}

MatrixXd CholeskyFactor::inverse() const {
  return symmetrize(solve(MatrixXd(MatrixXd::Identity(size(), size()))));
}

bool is_symmetric(const MatrixXd& A, double rel_tol) {
  if (A.rows() != A.cols()) return false;
  const double scale = std::max(A.cwiseAbs().maxCoeff(), 1e-300);
  return (A - A.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

CholeskyFactor jittered_cholesky(const MatrixXd& A, double scale) {
  if (A.rows() != A.cols()) throw DimensionMismatch("jittered_cholesky: matrix is not square");
  if (!A.allFinite()) throw IndefiniteMatrix("severely indefinite matrix: non-finite entries");
  CholeskyFactor f;
  for (double eps : kJitterLadder) {
    if (try_factor(A, eps * scale, f.lower)) {
      f.jitter = eps * scale;
      g_jitter_watermark = std::max(g_jitter_watermark, f.jitter);
      return f;
    }
  }
  std::ostringstream os;
  os << "severely indefinite matrix: Cholesky failed at jitter " << kJitterLadder.back() * scale;
  throw IndefiniteMatrix(os.str());
}

CholeskyFactor jittered_cholesky(const MatrixXd& A) {
  return jittered_cholesky(A, default_scale(A));
}

double jitter_watermark() { return g_jitter_watermark; }
void reset_jitter_watermark() { g_jitter_watermark = 0.0; }

GaussianMoments::GaussianMoments(VectorXd mean, MatrixXd cov)
    : mean_(std::move(mean)), cov_(std::move(cov)) {
  if (cov_.rows() != cov_.cols() || cov_.rows() != mean_.size())
    throw DimensionMismatch("GaussianMoments: mean/covariance dimensions disagree");
  if (!mean_.allFinite() || !cov_.allFinite())
    throw InvalidArgument("GaussianMoments: non-finite parameters");
  if (!is_symmetric(cov_)) throw InvalidArgument("GaussianMoments: covariance is not symmetric");
  cov_ = symmetrize(cov_);
  if ((cov_.diagonal().array() <= 0.0).any()) throw_degenerate(cov_, "covariance");
  chol_ = factor_spd(cov_, "covariance");
}

GaussianNatural to_natural(const GaussianMoments& g) {
  const MatrixXd prec = g.factor().inverse();
  return {prec * g.mean(), -0.5 * prec};
}

GaussianExpectation to_expectation(const GaussianMoments& g) {
  return {g.mean(), g.cov() + g.mean() * g.mean().transpose()};
}

GaussianMoments to_moments(const GaussianNatural& g) {
  if (g.eta2.rows() != g.eta1.size() || g.eta2.cols() != g.eta1.size())
    throw DimensionMismatch("GaussianNatural: eta1/eta2 dimensions disagree");
  const MatrixXd prec = symmetrize(-2.0 * g.eta2);
  const CholeskyFactor pf = factor_spd(prec, "precision -2*eta2");
  const MatrixXd cov = pf.inverse();
  return GaussianMoments(cov * g.eta1, cov);
}

GaussianMoments to_moments(const GaussianExpectation& g) {
  if (g.mu2.rows() != g.mu1.size() || g.mu2.cols() != g.mu1.size())
    throw DimensionMismatch("GaussianExpectation: mu1/mu2 dimensions disagree");
  MatrixXd cov = symmetrize(g.mu2 - g.mu1 * g.mu1.transpose());
  if ((cov.diagonal().array() <= 0.0).any()) throw_degenerate(cov, "mu2 - mu1 mu1^T");
  factor_spd(cov, "mu2 - mu1 mu1^T");
  return GaussianMoments(g.mu1, std::move(cov));
}

GaussianNatural to_natural(const GaussianExpectation& g) { return to_natural(to_moments(g)); }

GaussianExpectation to_expectation(const GaussianNatural& g) {
  return to_expectation(to_moments(g));
}

double kl_gaussian(const GaussianMoments& q, const VectorXd& p_mean, const CholeskyFactor& p_cov) {
  if (q.dim() != p_mean.size() || q.dim() != p_cov.size())
    throw DimensionMismatch("kl_gaussian: dimension mismatch");
  const auto k = static_cast<double>(q.dim());
  // tr(Sp^{-1} Sq) = ||Lp^{-1} Lq||_F^2
  const double trace_term = p_cov.solve_lower(q.chol()).squaredNorm();
  const double maha = p_cov.solve_lower(VectorXd(p_mean - q.mean())).squaredNorm();
  const double logdet = p_cov.log_det() - q.factor().log_det();
  return 0.5 * (trace_term + maha - k + logdet);
}

double kl_gaussian(const GaussianMoments& q, const GaussianMoments& p) {
  if (q.dim() != p.dim()) throw DimensionMismatch("kl_gaussian: dimension mismatch");
  return kl_gaussian(q, p.mean(), p.factor());
}

}  // namespace dualgp
