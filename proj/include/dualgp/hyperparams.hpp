#pragma once

#include "dualgp/kernels.hpp"
#include "dualgp/likelihoods.hpp"

#include <string>
#include <vector>

namespace dualgp {

/// Kernel plus likelihood parameters (theta).
struct Hyperparams {
  KernelSpec kernel;
  LikelihoodSpec likelihood;
};

enum class ThetaParam { LogLengthscale, LogVariance, LogNoise };

std::string to_string(ThetaParam p);

/// Which log-parameters are free during the M-step, in packing order.
struct ThetaLayout {
  std::vector<ThetaParam> free;

  /// Lengthscale and variance; noise too for a Gaussian likelihood.
  static ThetaLayout all_for(const LikelihoodSpec& lik);
  Eigen::Index size() const { return static_cast<Eigen::Index>(free.size()); }
  std::vector<std::string> names() const;
};

VectorXd pack(const Hyperparams& h, const ThetaLayout& layout);
Hyperparams unpack(const Hyperparams& base, const ThetaLayout& layout, const VectorXd& theta);

/// Every log-parameter regardless of layout: (log l, log s2_k[, log s2_noise]).
VectorXd full_theta(const Hyperparams& h);
std::vector<std::string> full_theta_names(const Hyperparams& h);

}  // namespace dualgp
