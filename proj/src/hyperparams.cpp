#include "dualgp/hyperparams.hpp"

#include "dualgp/error.hpp"

namespace dualgp {

std::string to_string(ThetaParam p) {
  switch (p) {
    case ThetaParam::LogLengthscale:
      return "log_lengthscale";
    case ThetaParam::LogVariance:
      return "log_variance";
    case ThetaParam::LogNoise:
      return "log_noise";
  }
  return "?";
}

ThetaLayout ThetaLayout::all_for(const LikelihoodSpec& lik) {
  ThetaLayout l{{ThetaParam::LogLengthscale, ThetaParam::LogVariance}};
  if (lik.family == LikelihoodFamily::Gaussian) l.free.push_back(ThetaParam::LogNoise);
  return l;
}

std::vector<std::string> ThetaLayout::names() const {
  std::vector<std::string> out;
  for (ThetaParam p : free) out.push_back(to_string(p));
  return out;
}

VectorXd pack(const Hyperparams& h, const ThetaLayout& layout) {
  VectorXd v(layout.size());
  for (Eigen::Index i = 0; i < layout.size(); ++i) {
    switch (layout.free[static_cast<std::size_t>(i)]) {
      case ThetaParam::LogLengthscale:
        v(i) = h.kernel.log_lengthscale;
        break;
      case ThetaParam::LogVariance:
        v(i) = h.kernel.log_variance;
        break;
      case ThetaParam::LogNoise:
        v(i) = h.likelihood.log_noise;
        break;
    }
  }
  return v;
}

Hyperparams unpack(const Hyperparams& base, const ThetaLayout& layout, const VectorXd& theta) {
  if (theta.size() != layout.size()) throw DimensionMismatch("unpack: theta size mismatch");
  Hyperparams h = base;
  for (Eigen::Index i = 0; i < layout.size(); ++i) {
    switch (layout.free[static_cast<std::size_t>(i)]) {
      case ThetaParam::LogLengthscale:
        h.kernel.log_lengthscale = theta(i);
        break;
      case ThetaParam::LogVariance:
        h.kernel.log_variance = theta(i);
        break;
      case ThetaParam::LogNoise:
        h.likelihood.log_noise = theta(i);
        break;
    }
  }
  return h;
}

VectorXd full_theta(const Hyperparams& h) {
  return pack(h, ThetaLayout::all_for(h.likelihood));
}

std::vector<std::string> full_theta_names(const Hyperparams& h) {
  return ThetaLayout::all_for(h.likelihood).names();
}

}  // namespace dualgp
