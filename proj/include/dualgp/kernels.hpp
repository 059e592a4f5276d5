#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>

namespace dualgp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class KernelFamily { SquaredExponential, Matern52 };
enum class KernelParam { LogLengthscale, LogVariance };

/// Isotropic stationary covariance. Parameters live in log-space.
struct KernelSpec {
  KernelFamily family = KernelFamily::Matern52;
  double log_lengthscale = 0.0;
  double log_variance = 0.0;

  static KernelSpec make(KernelFamily family, double lengthscale, double variance);
  double lengthscale() const;
  double variance() const;
};

std::string to_string(KernelFamily f);
KernelFamily parse_kernel_family(std::string_view name);
KernelParam parse_kernel_param(std::string_view name);

/// k(r) for a single distance.
double eval_distance(const KernelSpec& k, double r);

/// Entry (i,j) = k(A.row(i), B.row(j)).
MatrixXd eval_matrix(const KernelSpec& k, const MatrixXd& A, const MatrixXd& B);
/// k(a_i, a_i) for every row; constant for stationary kernels.
VectorXd eval_diag(const KernelSpec& k, const MatrixXd& A);
/// Entrywise derivative of eval_matrix with respect to a log-space parameter.
MatrixXd eval_grad(const KernelSpec& k, const MatrixXd& A, const MatrixXd& B, KernelParam p);

/// Inducing locations Z (m x d); rows must be pairwise distinct.
class InducingInputs {
 public:
  explicit InducingInputs(MatrixXd Z);
  const MatrixXd& Z() const { return Z_; }
  Eigen::Index size() const { return Z_.rows(); }
  Eigen::Index dim() const { return Z_.cols(); }

 private:
  MatrixXd Z_;
};

/// m equally spaced one-dimensional locations spanning [lo, hi].
InducingInputs grid_inducing(double lo, double hi, Eigen::Index m);

/// Lloyd's k-means on the rows of X, seeded k-means++ initialization.
InducingInputs kmeans_inducing(const MatrixXd& X, Eigen::Index m, std::uint64_t seed,
                               int max_iters = 100);

}  // namespace dualgp
