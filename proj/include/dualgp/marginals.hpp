#pragma once

#include <Eigen/Dense>

namespace dualgp {

/// Per-point Gaussian marginals q(f_i) = N(mean_i, var_i).
struct Marginals {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
};

}  // namespace dualgp
