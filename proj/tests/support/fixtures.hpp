#pragma once

#include "dualgp/dataset.hpp"
#include "dualgp/hyperparams.hpp"
#include "dualgp/kernels.hpp"

#include <random>

namespace fixture {

using dualgp::MatrixXd;
using dualgp::VectorXd;

struct Regression {
  MatrixXd X;
  VectorXd y;
};

/// y = sin(2x) + 0.3 x + N(0, noise_sd^2), x ~ U[-3, 3], sorted inputs.
inline Regression regression_1d(Eigen::Index n, std::uint64_t seed, double noise_sd = 0.2) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::normal_distribution<double> nd(0.0, noise_sd);
  std::vector<double> xs(n);
  for (auto& x : xs) x = u(rng);
  std::sort(xs.begin(), xs.end());
  Regression r{MatrixXd(n, 1), VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    r.X(i, 0) = xs[i];
    r.y(i) = std::sin(2.0 * xs[i]) + 0.3 * xs[i] + nd(rng);
  }
  return r;
}

inline MatrixXd linspace_points(double lo, double hi, Eigen::Index n) {
  MatrixXd X(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) X(i, 0) = lo + (hi - lo) * i / double(n - 1);
  return X;
}

/// Probit sinc classification: n=100, seed 1, standardized inputs, 10 grid inducing points,
/// Matern-5/2 with lengthscale 1/2.
struct Toy {
  MatrixXd X;
  VectorXd y;
  dualgp::InducingInputs Z;
  dualgp::Hyperparams hyper;
};

inline Toy toy_task(double variance = 1.0) {
  dualgp::Dataset d = dualgp::gen_sinc_classification(100, 1);
  dualgp::standardize(d);
  const double lo = d.X.minCoeff(), hi = d.X.maxCoeff();
  dualgp::Hyperparams h{dualgp::KernelSpec::make(dualgp::KernelFamily::Matern52, 0.5, variance),
                        dualgp::LikelihoodSpec::probit()};
  return {d.X, d.y, dualgp::grid_inducing(lo, hi, 10), h};
}

}  // namespace fixture
