#pragma once

#include "dualgp/gaussian.hpp"
#include "dualgp/hyperparams.hpp"
#include "dualgp/marginals.hpp"
#include "dualgp/tsvgp.hpp"

#include <vector>

namespace dualgp {

/// Standard SVGP state: q(u) held in natural coordinates.
struct QState {
  GaussianNatural eta;
  InducingInputs inducing;

  /// q(u) = p(u) = N(0, Kuu).
  static QState prior(InducingInputs Z, const KernelSpec& kernel);
};

/// Prior natural parameters (0, -Kuu^{-1}/2) at the given kernel.
GaussianNatural prior_natural(const InducingInputs& Z, const KernelSpec& kernel);

GaussianMoments qsvgp_moments(const QState& state);

/// Marginals of f at Xstar for a q(u) in moment form.
Marginals sparse_marginals(const GaussianMoments& qu, const InducingInputs& Z,
                           const KernelSpec& kernel, const MatrixXd& Xstar);

Marginals qsvgp_marginals(const QState& state, const KernelSpec& kernel, const MatrixXd& Xstar);

/// eta <- (1 - rho) eta + rho (eta0(theta) + G), G the projected site gradients.
/// Throws StepOvershoot when -2 eta2 is not SPD afterwards.
QState qsvgp_estep_step(const QState& state, const MatrixXd& X, const VectorXd& y,
                        const std::vector<Eigen::Index>& batch, const Hyperparams& hyper,
                        double rho);

QState qsvgp_estep_full(const QState& state, const MatrixXd& X, const VectorXd& y,
                        const Hyperparams& hyper, double rho);

/// ELBO of a frozen q(u); only projections and prior follow theta.
double sparse_standard_objective(const GaussianMoments& qu, const InducingInputs& Z,
                                 const MatrixXd& X, const VectorXd& y, const Hyperparams& hyper);

double qsvgp_standard_mstep_objective(const QState& state, const MatrixXd& X, const VectorXd& y,
                                      const Hyperparams& hyper);

/// Tied sites reproducing q(u) against the prior at `kernel`.
TiedSites tied_from_qstate(const QState& state, const KernelSpec& kernel);

}  // namespace dualgp
