#pragma once

#include "dualgp/hyperparams.hpp"
#include "dualgp/marginals.hpp"
#include "dualgp/qsvgp.hpp"
#include "dualgp/tsvgp.hpp"
#include "dualgp/tvgp.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace dualgp {

enum class ModelKind { Tvgp, Tsvgp, Qsvgp };
enum class MstepObjective { Proposed, Standard };

std::string to_string(ModelKind k);
std::string to_string(MstepObjective o);
ModelKind parse_model_kind(std::string_view name);
MstepObjective parse_objective(std::string_view name);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  VectorXd m;
  VectorXd v;
  int t = 0;  // number of updates applied so far

  static AdamState zeros(Eigen::Index k) { return {VectorXd::Zero(k), VectorXd::Zero(k), 0}; }
};

struct AdamResult {
  VectorXd params;
  AdamState state;
  bool skipped = false;  // gradient was not finite; nothing changed
};

/// One Adam update minimizing a loss whose gradient is `grad`; t is the 1-based step.
AdamResult adam_step(const VectorXd& params, const VectorXd& grad, const AdamState& state,
                     double lr, int t, const AdamConfig& cfg = {});

struct FdGradient {
  VectorXd grad;
  std::vector<bool> flagged;  // coordinate had a non-finite evaluation

  bool ok() const;
};

/// Central differences with step h * (1 + |theta_i|) per coordinate.
FdGradient fd_gradient(const std::function<double(const VectorXd&)>& objective,
                       const VectorXd& theta, double h);

struct TrainConfig {
  ModelKind model = ModelKind::Tsvgp;
  int e_steps = 4;
  int m_steps = 1;
  int outer_iters = 20;
  double e_rate = 0.7;
  double m_rate = 0.2;
  std::optional<Eigen::Index> batch_size;  // empty: full batch
  MstepObjective objective = MstepObjective::Proposed;
  double fd_step = 1e-4;
  AdamConfig adam;
  std::uint64_t seed = 0;
  /// Overrides the likelihood's quadrature order when set.
  std::optional<int> quadrature_order;
  /// Free log-parameters; empty means ThetaLayout::all_for(likelihood).
  std::optional<ThetaLayout> layout;

  /// Run the E-step until the largest parameter change is below e_tol (at most e_max_iters).
  bool e_to_convergence = false;
  double e_tol = 1e-8;
  int e_max_iters = 500;
  /// Run the M-step until the largest gradient entry is below m_tol (at most m_max_iters).
  bool m_to_convergence = false;
  double m_tol = 1e-6;
  int m_max_iters = 500;

  /// Throws InvalidArgument describing the first violated constraint.
  void validate(Eigen::Index n) const;
};

struct TrainData {
  MatrixXd X;
  VectorXd y;
  MatrixXd X_test;  // zero rows: no held-out metrics
  VectorXd y_test;
};

struct TraceRow {
  int iter = 0;
  double elbo = 0.0;
  double objective = 0.0;  // M-step objective at the end of the iteration (NaN before any)
  double nlpd_train = 0.0;
  double nlpd_test = 0.0;
  VectorXd theta;  // full_theta of the current hyperparameters
  double seconds = 0.0;
  double jitter_max = 0.0;
  std::string failure;  // empty when the iteration completed normally
};

struct Trace {
  std::vector<std::string> theta_names;
  std::vector<TraceRow> rows;

  std::vector<std::string> columns() const;
  void write_csv(const std::string& path) const;
};

using ModelState = std::variant<SiteParams, SparseState, QState>;

struct FitResult {
  Trace trace;
  Hyperparams hyper;
  ModelState state;
};

/// Initial state for `cfg.model`; sparse models need inducing inputs.
ModelState initial_state(ModelKind kind, const TrainData& data, const Hyperparams& hyper,
                         const std::optional<InducingInputs>& Z, bool full_batch);

/// Alternates E-steps at fixed theta with Adam M-steps on the configured objective.
FitResult run_em(const TrainData& data, const Hyperparams& init,
                 const std::optional<InducingInputs>& Z, const TrainConfig& cfg);

/// Continues from an existing state.
FitResult run_em(const TrainData& data, const Hyperparams& init, ModelState state,
                 const TrainConfig& cfg);

Marginals predict(const ModelState& state, const Hyperparams& hyper, const MatrixXd& X_train,
                  const MatrixXd& Xstar);

double model_elbo(const ModelState& state, const Hyperparams& hyper, const MatrixXd& X,
                  const VectorXd& y);

/// -(1/n) sum_i log p(y_i | D) at the given predictive marginals.
double nlpd(const LikelihoodSpec& lik, const Marginals& f, const VectorXd& y);

}  // namespace dualgp
