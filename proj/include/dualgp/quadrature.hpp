#pragma once

#include <Eigen/Dense>

#include <cmath>

namespace dualgp {

/// Gauss-Hermite rule rescaled for a standard normal:
/// E[h(z)], z ~ N(0,1)  ~=  sum_k weights[k] * h(nodes[k]).
struct GaussHermite {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

/// Rule of the given order (>= 1). Tables are built once per order and shared.
const GaussHermite& gauss_hermite(int order);

/// E[h(f)] for f ~ N(mean, var).
template <class F>
double gauss_hermite_expect(const GaussHermite& rule, double mean, double var, F&& h) {
  const double sd = std::sqrt(var);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < rule.nodes.size(); ++k)
    acc += rule.weights(k) * h(mean + sd * rule.nodes(k));
  return acc;
}

}  // namespace dualgp
