#pragma once

#include "dualgp/gaussian.hpp"
#include "dualgp/hyperparams.hpp"
#include "dualgp/marginals.hpp"
#include "dualgp/tvgp.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace dualgp {

/// Sites projected onto the inducing variables and summed:
/// lambda_bar1 = sum_i k_ui g1_i, Lambda_bar2 = sum_i k_ui g2_i k_ui^T (precision form, PSD).
struct TiedSites {
  VectorXd lambda_bar1;
  MatrixXd Lambda_bar2;

  static TiedSites zeros(Eigen::Index m);
  Eigen::Index size() const { return lambda_bar1.size(); }
  /// Throws unless shapes agree, Lambda_bar2 is symmetric and its eigenvalues
  /// are >= -1e-10 * trace / m.
  void validate() const;
};

/// Ties per-point sites through k_ui = k(Z, x_i) at the given kernel.
TiedSites tied_from_sites(const SiteParams& sites, const InducingInputs& Z,
                          const KernelSpec& kernel, const MatrixXd& X);

/// Factors for one (kernel, Z, tied) triple.
struct SparseFactor {
  KernelSpec kernel;
  MatrixXd Kuu;         // jittered, i.e. exactly the matrix factored below
  CholeskyFactor kuu;   // Kuu
  CholeskyFactor c;     // C = I + L^{-1} Lambda_bar2 L^{-T}, with Kuu = L L^T
  VectorXd w;           // L^{-1} lambda_bar1
};

/// Tied dual state plus cached factors. Copies share the (immutable) cache.
class SparseState {
 public:
  explicit SparseState(InducingInputs inducing);
  SparseState(InducingInputs inducing, TiedSites tied);

  const InducingInputs& inducing() const { return inducing_; }
  const TiedSites& tied() const { return tied_; }
  void set_tied(TiedSites tied);

  /// Cached factors when they were built for `kernel`, otherwise freshly built ones.
  std::shared_ptr<const SparseFactor> factor(const KernelSpec& kernel) const;
  /// Rebuilds the cache for `kernel`.
  void refresh(const KernelSpec& kernel);
  bool cache_valid_for(const KernelSpec& kernel) const;

  /// Per-point sites maintained alongside the tied state (full-batch bookkeeping).
  void enable_shadow(Eigen::Index n);
  const std::optional<SiteParams>& shadow() const { return shadow_; }
  std::optional<SiteParams>& shadow() { return shadow_; }

 private:
  InducingInputs inducing_;
  TiedSites tied_;
  std::shared_ptr<const SparseFactor> cache_;
  std::optional<SiteParams> shadow_;
};

GaussianMoments tsvgp_moments(const SparseState& state, const KernelSpec& kernel);

/// Marginals of f at Xstar: mean K*u R^{-1} lambda_bar1,
/// var k** - diag(K*u Kuu^{-1} Ku*) + diag(K*u R^{-1} Ku*).
Marginals tsvgp_marginals(const SparseState& state, const KernelSpec& kernel,
                          const MatrixXd& Xstar);

/// One tied natural-gradient step on the rows of X listed in `batch`.
SparseState tsvgp_estep_step(const SparseState& state, const MatrixXd& X, const VectorXd& y,
                             const std::vector<Eigen::Index>& batch, const Hyperparams& hyper,
                             double r);

/// Same step applied to every row.
SparseState tsvgp_estep_full(const SparseState& state, const MatrixXd& X, const VectorXd& y,
                             const Hyperparams& hyper, double r);

/// KL(q(u) || N(0, Kuu)) in R-matrix form.
double tsvgp_kl(const SparseState& state, const KernelSpec& kernel);

double tsvgp_elbo(const SparseState& state, const MatrixXd& X, const VectorXd& y,
                  const Hyperparams& hyper);

/// Log-partition of prior times the normalized tied site N(y~; u, B^{-1}) with
/// B = Kuu^{-1} L Kuu^{-1}, y~ = Kuu L^{-1} lambda_bar1, L = Lambda_bar2 + eps I,
/// eps = 1e-8 * mean diagonal of Lambda_bar2. Throws on zero Lambda_bar2.
double tsvgp_log_partition(const SparseState& state, const KernelSpec& kernel);

/// Proposed M-step objective: log-partition plus correction for prior(theta) times the
/// frozen sites. Uses the shadow sites re-tied at theta when present, else the tied
/// state as is. Throws on zero Lambda_bar2.
double tsvgp_mstep_objective(const SparseState& state, const MatrixXd& X, const VectorXd& y,
                             const Hyperparams& hyper);

/// max |lambda_i - g_i| over the untied shadow; throws without one.
double tsvgp_fixed_point_residual(const SparseState& state, const MatrixXd& X,
                                  const VectorXd& y, const Hyperparams& hyper);

}  // namespace dualgp
