#pragma once

#include <Eigen/Dense>

#include <array>

namespace dualgp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Lower Cholesky factor of `A + jitter * I`.
struct CholeskyFactor {
  MatrixXd lower;
  double jitter = 0.0;  // absolute diagonal inflation actually applied

  Eigen::Index size() const { return lower.rows(); }
  MatrixXd solve(const MatrixXd& b) const;
  VectorXd solve(const VectorXd& b) const;
  /// L^{-1} b
  MatrixXd solve_lower(const MatrixXd& b) const;
  VectorXd solve_lower(const VectorXd& b) const;
  double log_det() const;
  MatrixXd inverse() const;
  MatrixXd reconstruct() const { return lower * lower.transpose(); }
};

/// Relative jitter levels tried in order; multiplied by the scale argument.
inline constexpr std::array<double, 4> kJitterLadder{0.0, 1e-10, 1e-8, 1e-6};

/// Factors A + eps*scale*I for the smallest eps in kJitterLadder that succeeds.
/// Throws IndefiniteMatrix when every level fails.
CholeskyFactor jittered_cholesky(const MatrixXd& A, double scale);

/// Same, with scale = mean of the diagonal of A (1 if that is not positive).
CholeskyFactor jittered_cholesky(const MatrixXd& A);

/// Largest jitter applied by jittered_cholesky on this thread since the last reset.
double jitter_watermark();
void reset_jitter_watermark();

bool is_symmetric(const MatrixXd& A, double rel_tol = 1e-12);

/// Mean-covariance coordinates, with the Cholesky factor of the covariance cached.
class GaussianMoments {
 public:
  /// Validates symmetry, positive diagonal and positive definiteness.
  GaussianMoments(VectorXd mean, MatrixXd cov);

  const VectorXd& mean() const { return mean_; }
  const MatrixXd& cov() const { return cov_; }
  const MatrixXd& chol() const { return chol_.lower; }
  const CholeskyFactor& factor() const { return chol_; }
  Eigen::Index dim() const { return mean_.size(); }

 private:
  VectorXd mean_;
  MatrixXd cov_;
  CholeskyFactor chol_;
};

/// eta1 = S^{-1} m, eta2 = -S^{-1} / 2
struct GaussianNatural {
  VectorXd eta1;
  MatrixXd eta2;
};

/// mu1 = m, mu2 = S + m m^T
struct GaussianExpectation {
  VectorXd mu1;
  MatrixXd mu2;
};

GaussianNatural to_natural(const GaussianMoments& g);
GaussianNatural to_natural(const GaussianExpectation& g);
GaussianExpectation to_expectation(const GaussianMoments& g);
GaussianExpectation to_expectation(const GaussianNatural& g);
GaussianMoments to_moments(const GaussianNatural& g);
GaussianMoments to_moments(const GaussianExpectation& g);

/// KL(q || p) between two Gaussians of equal dimension.
double kl_gaussian(const GaussianMoments& q, const GaussianMoments& p);

}  // namespace dualgp

namespace dualgp {

/// KL(q || N(p_mean, p_cov)) with p_cov given by its (possibly jittered) factor.
double kl_gaussian(const GaussianMoments& q, const VectorXd& p_mean, const CholeskyFactor& p_cov);

}  // namespace dualgp
