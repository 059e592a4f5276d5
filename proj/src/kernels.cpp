#include "dualgp/kernels.hpp"

#include "dualgp/error.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace dualgp {

namespace {

constexpr double kSqrt5 = 2.23606797749978969640917366873127623544;

void check_dims(const MatrixXd& A, const MatrixXd& B) {
  if (A.cols() != B.cols()) {
    std::ostringstream os;
    os << "kernel: input dimension mismatch (" << A.cols() << " vs " << B.cols() << ")";
    throw DimensionMismatch(os.str());
  }
}

MatrixXd distances(const MatrixXd& A, const MatrixXd& B) {
  check_dims(A, B);
  MatrixXd D(A.rows(), B.rows());
  for (Eigen::Index j = 0; j < B.rows(); ++j)
    for (Eigen::Index i = 0; i < A.rows(); ++i) D(i, j) = (A.row(i) - B.row(j)).norm();
  return D;
}

// d k / d log(lengthscale) at distance r.
double dk_dlog_lengthscale(const KernelSpec& k, double r) {
  const double ell = k.lengthscale();
  const double var = k.variance();
  switch (k.family) {
    case KernelFamily::SquaredExponential: {
      const double u = r * r / (ell * ell);
      return var * std::exp(-0.5 * u) * u;
    }
    case KernelFamily::Matern52: {
      const double s = kSqrt5 * r / ell;
      return var * s * s * (1.0 + s) / 3.0 * std::exp(-s);
    }
  }
  return 0.0;
}

}  // namespace

KernelSpec KernelSpec::make(KernelFamily family, double lengthscale, double variance) {
  if (!(lengthscale > 0.0) || !(variance > 0.0))
    throw InvalidArgument("KernelSpec: lengthscale and variance must be positive");
  return {family, std::log(lengthscale), std::log(variance)};
}

double KernelSpec::lengthscale() const { return std::exp(log_lengthscale); }
double KernelSpec::variance() const { return std::exp(log_variance); }

std::string to_string(KernelFamily f) {
  return f == KernelFamily::SquaredExponential ? "se" : "matern52";
}

KernelFamily parse_kernel_family(std::string_view name) {
  if (name == "se" || name == "rbf" || name == "squared-exponential")
    return KernelFamily::SquaredExponential;
  if (name == "matern52" || name == "matern-5/2") return KernelFamily::Matern52;
  throw InvalidArgument("unknown kernel family: " + std::string(name));
}

KernelParam parse_kernel_param(std::string_view name) {
  if (name == "log-lengthscale") return KernelParam::LogLengthscale;
  if (name == "log-variance") return KernelParam::LogVariance;
  throw InvalidArgument("unknown kernel parameter: " + std::string(name));
}

double eval_distance(const KernelSpec& k, double r) {
  const double ell = k.lengthscale();
  const double var = k.variance();
  switch (k.family) {
    case KernelFamily::SquaredExponential:
      return var * std::exp(-0.5 * r * r / (ell * ell));
    case KernelFamily::Matern52: {
      const double s = kSqrt5 * r / ell;
      return var * (1.0 + s + s * s / 3.0) * std::exp(-s);
    }
  }
  return 0.0;
}

MatrixXd eval_matrix(const KernelSpec& k, const MatrixXd& A, const MatrixXd& B) {
  return distances(A, B).unaryExpr([&](double r) { return eval_distance(k, r); });
}

VectorXd eval_diag(const KernelSpec& k, const MatrixXd& A) {
  return VectorXd::Constant(A.rows(), k.variance());
}

MatrixXd eval_grad(const KernelSpec& k, const MatrixXd& A, const MatrixXd& B, KernelParam p) {
  switch (p) {
    case KernelParam::LogVariance:
      return eval_matrix(k, A, B);
    case KernelParam::LogLengthscale:
      return distances(A, B).unaryExpr([&](double r) { return dk_dlog_lengthscale(k, r); });
  }
  throw InvalidArgument("eval_grad: unknown parameter");
}

InducingInputs::InducingInputs(MatrixXd Z) : Z_(std::move(Z)) {
  if (Z_.rows() == 0) throw InvalidArgument("InducingInputs: need at least one location");
  if (!Z_.allFinite()) throw InvalidArgument("InducingInputs: non-finite location");
  for (Eigen::Index i = 0; i < Z_.rows(); ++i)
    for (Eigen::Index j = i + 1; j < Z_.rows(); ++j)
      if ((Z_.row(i) - Z_.row(j)).norm() <= 1e-12) {
        std::ostringstream os;
        os << "InducingInputs: rows " << i << " and " << j << " coincide";
        throw InvalidArgument(os.str());
      }
}

InducingInputs grid_inducing(double lo, double hi, Eigen::Index m) {
  if (m < 1 || !(hi > lo)) throw InvalidArgument("grid_inducing: need m >= 1 and hi > lo");
  MatrixXd Z(m, 1);
  if (m == 1) {
    Z(0, 0) = 0.5 * (lo + hi);
  } else {
    Z.col(0) = VectorXd::LinSpaced(m, lo, hi);
  }
  return InducingInputs(std::move(Z));
}

InducingInputs kmeans_inducing(const MatrixXd& X, Eigen::Index m, std::uint64_t seed,
                               int max_iters) {
  const Eigen::Index n = X.rows();
  if (m < 1 || m > n) throw InvalidArgument("kmeans_inducing: need 1 <= m <= n");
  std::mt19937_64 rng(seed);

  // k-means++ seeding
  MatrixXd C(m, X.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  C.row(0) = X.row(pick(rng));
  VectorXd d2 = (X.rowwise() - C.row(0)).rowwise().squaredNorm();
  for (Eigen::Index c = 1; c < m; ++c) {
    const double total = d2.sum();
    Eigen::Index chosen = pick(rng);
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= d2(i);
        if (target <= 0.0) {
          chosen = i;
          break;
        }
      }
    }
    C.row(c) = X.row(chosen);
    d2 = d2.cwiseMin((X.rowwise() - C.row(c)).rowwise().squaredNorm());
  }

  std::vector<Eigen::Index> assign(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < max_iters; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      (C.rowwise() - X.row(i)).rowwise().squaredNorm().minCoeff(&best);
      if (assign[static_cast<std::size_t>(i)] != best) {
        assign[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    MatrixXd sums = MatrixXd::Zero(m, X.cols());
    VectorXd counts = VectorXd::Zero(m);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += X.row(i);
      counts(assign[static_cast<std::size_t>(i)]) += 1.0;
    }
    for (Eigen::Index c = 0; c < m; ++c)
      if (counts(c) > 0.0) C.row(c) = sums.row(c) / counts(c);
    if (!changed) break;
  }

  // Empty or merged clusters can produce duplicate centres; nudge them apart.
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < i; ++j)
      if ((C.row(i) - C.row(j)).norm() <= 1e-9) C(i, 0) += 1e-6 * static_cast<double>(i + 1);
  return InducingInputs(std::move(C));
}

}  // namespace dualgp
