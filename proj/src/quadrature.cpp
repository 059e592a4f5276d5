#include "dualgp/quadrature.hpp"

#include "dualgp/error.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>

namespace dualgp {

namespace {

// Golub-Welsch: eigen-decomposition of the Jacobi matrix of the probabilists'
// Hermite polynomials, whose weight is the standard normal density.
GaussHermite build_rule(int order) {
  const Eigen::Index n = order;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index k = 1; k < n; ++k) {
    J(k, k - 1) = std::sqrt(static_cast<double>(k));
    J(k - 1, k) = J(k, k - 1);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  GaussHermite rule;
  rule.nodes = es.eigenvalues();
  rule.weights = es.eigenvectors().row(0).transpose().array().square();
  rule.weights /= rule.weights.sum();
  // Symmetrize to remove eigen-solver round-off.
  for (Eigen::Index k = 0; k < n / 2; ++k) {
    const Eigen::Index j = n - 1 - k;
    const double x = 0.5 * (rule.nodes(j) - rule.nodes(k));
    const double w = 0.5 * (rule.weights(j) + rule.weights(k));
    rule.nodes(k) = -x;
    rule.nodes(j) = x;
    rule.weights(k) = rule.weights(j) = w;
  }
  if (n % 2 == 1) rule.nodes(n / 2) = 0.0;
  return rule;
}

}  // namespace

const GaussHermite& gauss_hermite(int order) {
  if (order < 1) throw InvalidArgument("gauss_hermite: order must be >= 1");
  static std::mutex mu;
  static std::map<int, std::unique_ptr<const GaussHermite>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[order];
  if (!slot) slot = std::make_unique<const GaussHermite>(build_rule(order));
  return *slot;
}

}  // namespace dualgp
