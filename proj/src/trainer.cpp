#include "dualgp/trainer.hpp"

#include "dualgp/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace dualgp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr int kMaxHalvings = 5;

template <class... Fs>
struct overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

// Epoch-wise shuffled minibatches; the whole index set when batch is empty.
class BatchSampler {
 public:
  BatchSampler(Eigen::Index n, std::optional<Eigen::Index> batch, std::uint64_t seed)
      : n_(n), batch_(batch), rng_(seed), perm_(static_cast<std::size_t>(n)) {
    std::iota(perm_.begin(), perm_.end(), Eigen::Index{0});
    if (batch_) reshuffle();
  }

  std::vector<Eigen::Index> next() {
    if (!batch_ || *batch_ >= n_) return perm_;
    if (pos_ + static_cast<std::size_t>(*batch_) > perm_.size()) reshuffle();
    std::vector<Eigen::Index> out(perm_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                  perm_.begin() + static_cast<std::ptrdiff_t>(pos_ + *batch_));
    pos_ += static_cast<std::size_t>(*batch_);
    return out;
  }

 private:
  void reshuffle() {
    std::iota(perm_.begin(), perm_.end(), Eigen::Index{0});
    std::shuffle(perm_.begin(), perm_.end(), rng_);
    pos_ = 0;
  }

  Eigen::Index n_;
  std::optional<Eigen::Index> batch_;
  std::mt19937_64 rng_;
  std::vector<Eigen::Index> perm_;
  std::size_t pos_ = 0;
};

ModelState estep_once(const ModelState& state, const TrainData& data, const Hyperparams& hyper,
                      const std::vector<Eigen::Index>& batch, double r) {
  return std::visit(
      overloaded{
          [&](const SiteParams& s) -> ModelState {
            if (static_cast<Eigen::Index>(batch.size()) != data.X.rows())
              throw InvalidArgument("t-VGP E-steps are full-batch only");
            return tvgp_estep(s, data.X, data.y, hyper, r, 1);
          },
          [&](const SparseState& s) -> ModelState {
            return tsvgp_estep_step(s, data.X, data.y, batch, hyper, r);
          },
          [&](const QState& s) -> ModelState {
            return qsvgp_estep_step(s, data.X, data.y, batch, hyper, r);
          }},
      state);
}

double max_abs_change(const ModelState& a, const ModelState& b) {
  return std::visit(
      overloaded{
          [&](const SiteParams& s) {
            const auto& t = std::get<SiteParams>(b);
            return std::max((s.lambda1 - t.lambda1).cwiseAbs().maxCoeff(),
                            (s.lambda2 - t.lambda2).cwiseAbs().maxCoeff());
          },
          [&](const SparseState& s) {
            const auto& t = std::get<SparseState>(b).tied();
            return std::max((s.tied().lambda_bar1 - t.lambda_bar1).cwiseAbs().maxCoeff(),
                            (s.tied().Lambda_bar2 - t.Lambda_bar2).cwiseAbs().maxCoeff());
          },
          [&](const QState& s) {
            const auto& t = std::get<QState>(b).eta;
            return std::max((s.eta.eta1 - t.eta1).cwiseAbs().maxCoeff(),
                            (s.eta.eta2 - t.eta2).cwiseAbs().maxCoeff());
          }},
      a);
}

bool state_finite(const ModelState& s) {
  return std::visit(overloaded{[](const SiteParams& p) {
                                 return p.lambda1.allFinite() && p.lambda2.allFinite();
                               },
                               [](const SparseState& p) {
                                 return p.tied().lambda_bar1.allFinite() &&
                                        p.tied().Lambda_bar2.allFinite();
                               },
                               [](const QState& p) {
                                 return p.eta.eta1.allFinite() && p.eta.eta2.allFinite();
                               }},
                    s);
}

using ThetaObjective = std::function<double(const Hyperparams&)>;

// The M-step objective with the variational information frozen at the current state.
ThetaObjective frozen_objective(const ModelState& state, const TrainData& data,
                                const Hyperparams& hyper, MstepObjective kind) {
  const MatrixXd& X = data.X;
  const VectorXd& y = data.y;
  return std::visit(
      overloaded{
          [&](const SiteParams& s) -> ThetaObjective {
            if (kind == MstepObjective::Proposed)
              return [s, &X, &y](const Hyperparams& h) { return tvgp_mstep_objective(s, X, y, h); };
            GaussianMoments q = tvgp_posterior(s, hyper.kernel, X);
            return [q, &X, &y](const Hyperparams& h) {
              return tvgp_standard_mstep_objective(q, X, y, h);
            };
          },
          [&](const SparseState& s) -> ThetaObjective {
            if (kind == MstepObjective::Proposed) {
              return [s, &X, &y](const Hyperparams& h) {
                // q = prior: the unnormalized site is identically one and the
                // objective reduces to the ELBO
                if (s.tied().Lambda_bar2.isZero(0.0)) return tsvgp_elbo(s, X, y, h);
                return tsvgp_mstep_objective(s, X, y, h);
              };
            }
            GaussianMoments q = tsvgp_moments(s, hyper.kernel);
            InducingInputs Z = s.inducing();
            return [q, Z, &X, &y](const Hyperparams& h) {
              return sparse_standard_objective(q, Z, X, y, h);
            };
          },
          [&](const QState& s) -> ThetaObjective {
            if (kind == MstepObjective::Proposed)
              throw InvalidArgument(
                  "the proposed M-step objective needs a dual-parameterized model (tvgp or tsvgp)");
            return [s, &X, &y](const Hyperparams& h) {
              return qsvgp_standard_mstep_objective(s, X, y, h);
            };
          }},
      state);
}

// Brings cached or theta-dependent pieces of the state in line with new hyperparameters.
void on_theta_change(ModelState& state, const TrainData& data, const Hyperparams& hyper) {
  if (auto* s = std::get_if<SparseState>(&state)) {
    if (s->shadow()) s->set_tied(tied_from_sites(*s->shadow(), s->inducing(), hyper.kernel, data.X));
    s->refresh(hyper.kernel);
  }
}

TraceRow measure(int iter, const ModelState& state, const TrainData& data,
                 const Hyperparams& hyper, double objective) {
  TraceRow row;
  row.iter = iter;
  row.elbo = model_elbo(state, hyper, data.X, data.y);
  row.objective = objective;
  row.nlpd_train = nlpd(hyper.likelihood, predict(state, hyper, data.X, data.X), data.y);
  row.nlpd_test = data.X_test.rows() > 0
                      ? nlpd(hyper.likelihood, predict(state, hyper, data.X, data.X_test), data.y_test)
                      : kNaN;
  row.theta = full_theta(hyper);
  return row;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Tvgp: return "tvgp";
    case ModelKind::Tsvgp: return "tsvgp";
    case ModelKind::Qsvgp: return "qsvgp";
  }
  return "?";
}

std::string to_string(MstepObjective o) {
  return o == MstepObjective::Proposed ? "proposed" : "standard";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "tvgp") return ModelKind::Tvgp;
  if (name == "tsvgp") return ModelKind::Tsvgp;
  if (name == "qsvgp") return ModelKind::Qsvgp;
  throw InvalidArgument("unknown model '" + std::string(name) + "' (expected tvgp, tsvgp or qsvgp)");
}

MstepObjective parse_objective(std::string_view name) {
  if (name == "proposed") return MstepObjective::Proposed;
  if (name == "standard") return MstepObjective::Standard;
  throw InvalidArgument("unknown objective '" + std::string(name) + "' (expected proposed or standard)");
}

AdamResult adam_step(const VectorXd& params, const VectorXd& grad, const AdamState& state,
                     double lr, int t, const AdamConfig& cfg) {
  if (t < 1) throw InvalidArgument("adam_step: t must be at least 1");
  if (grad.size() != params.size()) throw DimensionMismatch("adam_step: grad and params differ in size");
  if (!grad.allFinite()) return {params, state, true};
  AdamState s = state;
  if (s.m.size() != params.size()) s = AdamState::zeros(params.size());
  s.m = cfg.beta1 * s.m + (1.0 - cfg.beta1) * grad;
  s.v = cfg.beta2 * s.v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  s.t = t;
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  const VectorXd mhat = s.m / c1;
  const VectorXd vhat = s.v / c2;
  VectorXd next = params - lr * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + cfg.eps).matrix());
  return {std::move(next), std::move(s), false};
}

bool FdGradient::ok() const {
  return std::none_of(flagged.begin(), flagged.end(), [](bool b) { return b; });
}

FdGradient fd_gradient(const std::function<double(const VectorXd&)>& objective,
                       const VectorXd& theta, double h) {
  if (!(h > 0.0)) throw InvalidArgument("fd_gradient: step must be positive");
  FdGradient out{VectorXd::Zero(theta.size()), std::vector<bool>(static_cast<std::size_t>(theta.size()))};
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double step = h * (1.0 + std::abs(theta(i)));
    VectorXd up = theta, dn = theta;
    up(i) += step;
    dn(i) -= step;
    double fu = kNaN, fd = kNaN;
    try {
      fu = objective(up);
      fd = objective(dn);
    } catch (const Error&) {
    }
    if (!std::isfinite(fu) || !std::isfinite(fd)) {
      out.flagged[static_cast<std::size_t>(i)] = true;
      out.grad(i) = kNaN;
    } else {
      out.grad(i) = (fu - fd) / (up(i) - dn(i));
    }
  }
  return out;
}

void TrainConfig::validate(Eigen::Index n) const {
  if (e_steps < 0 || m_steps < 0) throw InvalidArgument("e_steps and m_steps must be non-negative");
  if (outer_iters < 0) throw InvalidArgument("outer_iters must be non-negative");
  if (!(e_rate > 0.0 && e_rate <= 1.0)) throw InvalidArgument("e_rate must lie in (0, 1]");
  if (!(m_rate > 0.0)) throw InvalidArgument("m_rate must be positive");
  if (!(fd_step > 0.0)) throw InvalidArgument("fd_step must be positive");
  if (batch_size && (*batch_size < 1 || *batch_size > n))
    throw InvalidArgument("batch size must lie in [1, n]");
  if (batch_size && *batch_size < n && model == ModelKind::Tvgp)
    throw InvalidArgument("t-VGP is full-batch only");
  if (quadrature_order && *quadrature_order < 2) throw InvalidArgument("quadrature order must be >= 2");
  if (objective == MstepObjective::Proposed && model == ModelKind::Qsvgp)
    throw InvalidArgument("the proposed M-step objective needs a dual-parameterized model (tvgp or tsvgp)");
  if (e_to_convergence && !(e_tol > 0.0 && e_max_iters > 0))
    throw InvalidArgument("E-step convergence needs e_tol > 0 and e_max_iters > 0");
  if (m_to_convergence && !(m_tol > 0.0 && m_max_iters > 0))
    throw InvalidArgument("M-step convergence needs m_tol > 0 and m_max_iters > 0");
}

std::vector<std::string> Trace::columns() const {
  std::vector<std::string> cols{"iter", "elbo", "objective", "nlpd_train", "nlpd_test"};
  for (std::size_t j = 0; j < theta_names.size(); ++j) cols.push_back("theta_" + std::to_string(j));
  cols.emplace_back("seconds");
  cols.emplace_back("jitter_max");
  return cols;
}

void Trace::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  const auto cols = columns();
  for (std::size_t j = 0; j < cols.size(); ++j) out << (j ? "," : "") << cols[j];
  out << '\n';
  for (const auto& r : rows) {
    out << r.iter << ',' << format_double(r.elbo) << ',' << format_double(r.objective) << ','
        << format_double(r.nlpd_train) << ',' << format_double(r.nlpd_test);
    for (Eigen::Index j = 0; j < r.theta.size(); ++j) out << ',' << format_double(r.theta(j));
    out << ',' << format_double(r.seconds) << ',' << format_double(r.jitter_max) << '\n';
  }
}

ModelState initial_state(ModelKind kind, const TrainData& data, const Hyperparams& hyper,
                         const std::optional<InducingInputs>& Z, bool full_batch) {
  switch (kind) {
    case ModelKind::Tvgp:
      return SiteParams::zeros(data.X.rows());
    case ModelKind::Tsvgp: {
      if (!Z) throw InvalidArgument("t-SVGP needs inducing inputs");
      SparseState s(*Z);
      if (full_batch) s.enable_shadow(data.X.rows());
      s.refresh(hyper.kernel);
      return s;
    }
    case ModelKind::Qsvgp:
      if (!Z) throw InvalidArgument("q-SVGP needs inducing inputs");
      return QState::prior(*Z, hyper.kernel);
  }
  throw InvalidArgument("unknown model kind");
}

FitResult run_em(const TrainData& data, const Hyperparams& init,
                 const std::optional<InducingInputs>& Z, const TrainConfig& cfg) {
  const bool full = !cfg.batch_size || *cfg.batch_size >= data.X.rows();
  Hyperparams h = init;
  if (cfg.quadrature_order) h.likelihood.quadrature_order = *cfg.quadrature_order;
  return run_em(data, h, initial_state(cfg.model, data, h, Z, full), cfg);
}

FitResult run_em(const TrainData& data, const Hyperparams& init, ModelState state,
                 const TrainConfig& cfg) {
  if (data.X.rows() == 0) throw InvalidArgument("run_em: empty dataset");
  if (data.X.rows() != data.y.size()) throw DimensionMismatch("run_em: X and y disagree in n");
  cfg.validate(data.X.rows());
  const ModelKind actual = std::holds_alternative<SiteParams>(state)    ? ModelKind::Tvgp
                           : std::holds_alternative<SparseState>(state) ? ModelKind::Tsvgp
                                                                        : ModelKind::Qsvgp;
  if (actual != cfg.model) throw InvalidArgument("run_em: state does not match the configured model");

  Hyperparams hyper = init;
  if (cfg.quadrature_order) hyper.likelihood.quadrature_order = *cfg.quadrature_order;
  hyper.likelihood.validate();
  const ThetaLayout layout = cfg.layout ? *cfg.layout : ThetaLayout::all_for(hyper.likelihood);

  FitResult result{Trace{full_theta_names(hyper), {}}, hyper, std::move(state)};
  BatchSampler sampler(data.X.rows(), cfg.batch_size, cfg.seed);
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  reset_jitter_watermark();
  {
    TraceRow row = measure(0, result.state, data, hyper, kNaN);
    row.objective = row.elbo;  // before any M-step both objectives equal the ELBO
    row.seconds = elapsed();
    row.jitter_max = jitter_watermark();
    result.trace.rows.push_back(std::move(row));
  }

  const int e_target = cfg.e_to_convergence ? cfg.e_max_iters : cfg.e_steps;
  const int m_target = cfg.m_to_convergence ? cfg.m_max_iters : cfg.m_steps;
  if (e_target == 0 && m_target == 0) return result;

  // Adam moments persist across outer iterations, like a long-lived optimizer object.
  AdamState adam = AdamState::zeros(layout.size());

  for (int it = 1; it <= cfg.outer_iters; ++it) {
    reset_jitter_watermark();
    std::string failure;

    // E-step at fixed theta
    double r = cfg.e_rate;
    int halvings = 0;
    for (int k = 0; k < e_target && failure.empty();) {
      const auto batch = sampler.next();
      try {
        ModelState next = estep_once(result.state, data, hyper, batch, r);
        if (!state_finite(next)) throw Error("non-finite variational state");
        const double change = max_abs_change(result.state, next);
        result.state = std::move(next);
        ++k;
        if (cfg.e_to_convergence && change < cfg.e_tol) break;
      } catch (const Error& e) {
        if (++halvings > kMaxHalvings) {
          failure = std::string("E-step: ") + e.what();
          break;
        }
        r *= 0.5;
      }
    }

    // M-step on the frozen variational information
    double objective_value = kNaN;
    if (failure.empty() && m_target > 0) {
      try {
        const ThetaObjective obj = frozen_objective(result.state, data, hyper, cfg.objective);
        auto at = [&](const VectorXd& th) { return obj(unpack(hyper, layout, th)); };
        VectorXd theta = pack(hyper, layout);
        double lr = cfg.m_rate;
        halvings = 0;
        for (int k = 0; k < m_target;) {
          const FdGradient g = fd_gradient(at, theta, cfg.fd_step);
          bool bad = !g.ok();
          if (!bad && cfg.m_to_convergence && g.grad.cwiseAbs().maxCoeff() < cfg.m_tol) break;
          if (!bad) {
            const AdamResult step = adam_step(theta, -g.grad, adam, lr, adam.t + 1, cfg.adam);
            double trial = kNaN;
            try {
              trial = at(step.params);
            } catch (const Error&) {
            }
            bad = step.skipped || !std::isfinite(trial);
            if (!bad) {
              theta = step.params;
              adam = step.state;
              ++k;
              continue;
            }
          }
          if (++halvings > kMaxHalvings) {
            failure = "M-step: non-finite objective or gradient";
            break;
          }
          lr *= 0.5;
        }
        hyper = unpack(hyper, layout, theta);
        objective_value = obj(hyper);
      } catch (const Error& e) {
        failure = std::string("M-step: ") + e.what();
      }
      try {
        on_theta_change(result.state, data, hyper);
      } catch (const Error& e) {
        if (failure.empty()) failure = std::string("M-step: ") + e.what();
      }
    } else if (failure.empty()) {
      try {
        objective_value = frozen_objective(result.state, data, hyper, cfg.objective)(hyper);
      } catch (const Error&) {
        objective_value = model_elbo(result.state, hyper, data.X, data.y);
      }
    }

    TraceRow row;
    try {
      row = measure(it, result.state, data, hyper, objective_value);
    } catch (const Error& e) {
      row.iter = it;
      row.elbo = row.objective = row.nlpd_train = row.nlpd_test = kNaN;
      row.theta = full_theta(hyper);
      if (failure.empty()) failure = std::string("metrics: ") + e.what();
    }
    row.failure = failure;
    row.seconds = elapsed();
    row.jitter_max = jitter_watermark();
    result.trace.rows.push_back(std::move(row));
  }
  result.hyper = hyper;
  return result;
}

Marginals predict(const ModelState& state, const Hyperparams& hyper, const MatrixXd& X_train,
                  const MatrixXd& Xstar) {
  return std::visit(
      overloaded{[&](const SiteParams& s) { return tvgp_predict(s, hyper.kernel, X_train, Xstar); },
                 [&](const SparseState& s) { return tsvgp_marginals(s, hyper.kernel, Xstar); },
                 [&](const QState& s) { return qsvgp_marginals(s, hyper.kernel, Xstar); }},
      state);
}

double model_elbo(const ModelState& state, const Hyperparams& hyper, const MatrixXd& X,
                  const VectorXd& y) {
  return std::visit(
      overloaded{[&](const SiteParams& s) { return tvgp_elbo(s, X, y, hyper); },
                 [&](const SparseState& s) { return tsvgp_elbo(s, X, y, hyper); },
                 [&](const QState& s) {
                   return qsvgp_standard_mstep_objective(s, X, y, hyper);
                 }},
      state);
}

double nlpd(const LikelihoodSpec& lik, const Marginals& f, const VectorXd& y) {
  if (f.mean.size() != y.size() || f.var.size() != y.size())
    throw DimensionMismatch("nlpd: marginals and targets disagree in n");
  if (y.size() == 0) throw InvalidArgument("nlpd: no test points");
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    total += predictive_log_density(lik, y(i), f.mean(i), std::max(f.var(i), 1e-12));
  return -total / static_cast<double>(y.size());
}

}  // namespace dualgp
