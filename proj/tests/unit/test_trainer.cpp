#include "dualgp/error.hpp"
#include "dualgp/trainer.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace dualgp;

namespace {

TrainData toy_data(const fixture::Toy& toy) { return {toy.X, toy.y, MatrixXd(0, 1), VectorXd(0)}; }

bool same_metrics(const Trace& a, const Trace& b) {
  if (a.rows.size() != b.rows.size()) return false;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const TraceRow &x = a.rows[i], &y = b.rows[i];
    const auto eq = [](double p, double q) { return p == q || (std::isnan(p) && std::isnan(q)); };
    if (!eq(x.elbo, y.elbo) || !eq(x.objective, y.objective) || !eq(x.nlpd_train, y.nlpd_train) ||
        !eq(x.nlpd_test, y.nlpd_test) || x.theta != y.theta || x.jitter_max != y.jitter_max)
      return false;
  }
  return true;
}

// Maximizes exact_gp_logml by gradient ascent with backtracking on the analytic gradient.
VectorXd maximize_logml(const MatrixXd& X, const VectorXd& y, VectorXd theta, KernelFamily fam) {
  auto value = [&](const VectorXd& t) {
    return exact_gp_logml(X, y, KernelSpec::make(fam, std::exp(t(0)), std::exp(t(1))), std::exp(t(2)));
  };
  double f = value(theta);
  for (int it = 0; it < 5000; ++it) {
    const VectorXd g = exact_gp_logml_grad(X, y, KernelSpec::make(fam, std::exp(theta(0)), std::exp(theta(1))),
                                           std::exp(theta(2)));
    if (g.norm() < 1e-9) break;
    double step = 1.0;
    while (step > 1e-12) {
      const VectorXd cand = theta + step * g;
      const double fc = value(cand);
      if (fc > f + 1e-4 * step * g.squaredNorm()) {
        theta = cand;
        f = fc;
        break;
      }
      step *= 0.5;
    }
  }
  return theta;
}

}  // namespace

TEST_CASE("adam_step") {
  const AdamConfig cfg;
  SUBCASE("zero gradient leaves parameters unchanged") {
    const VectorXd p = VectorXd::Constant(2, 0.3);
    const AdamResult r = adam_step(p, VectorXd::Zero(2), AdamState::zeros(2), 0.1, 1, cfg);
    CHECK(r.params == p);
  }
  SUBCASE("first step moves by about the learning rate") {
    const AdamResult r = adam_step(VectorXd::Zero(1), VectorXd::Ones(1), AdamState::zeros(1), 0.1, 1, cfg);
    CHECK(r.params(0) == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-12));
    CHECK(r.state.t == 1);
  }
  SUBCASE("second moment accumulates") {
    const AdamResult a = adam_step(VectorXd::Zero(1), VectorXd::Ones(1), AdamState::zeros(1), 0.1, 1, cfg);
    const AdamResult b = adam_step(a.params, VectorXd::Ones(1), a.state, 0.1, 2, cfg);
    CHECK(b.state.v(0) == doctest::Approx(0.999 * 0.001 + 0.001).epsilon(1e-14));
    CHECK(b.state.m(0) == doctest::Approx(0.9 * 0.1 + 0.1).epsilon(1e-14));
    CHECK(b.params(0) == doctest::Approx(-0.2).epsilon(1e-6));
  }
  SUBCASE("non-finite gradient is skipped") {
    VectorXd g(2);
    g << 1.0, std::numeric_limits<double>::quiet_NaN();
    const AdamResult r = adam_step(VectorXd::Ones(2), g, AdamState::zeros(2), 0.1, 1, cfg);
    CHECK(r.skipped);
    CHECK(r.params == VectorXd::Ones(2));
    CHECK(r.state.t == 0);
  }
  CHECK_THROWS_AS(adam_step(VectorXd::Zero(1), VectorXd::Zero(1), AdamState::zeros(1), 0.1, 0, cfg), InvalidArgument);
}

TEST_CASE("fd_gradient") {
  VectorXd theta(3);
  theta << 0.5, -1.0, 2.0;
  const FdGradient c = fd_gradient([](const VectorXd&) { return 4.2; }, theta, 1e-4);
  CHECK(c.ok());
  CHECK(c.grad.cwiseAbs().maxCoeff() == 0.0);

  const FdGradient q = fd_gradient([](const VectorXd& t) { return 3 * t(0) * t(0) - t(0) * t(1) + 0.5 * t(2) * t(2); },
                                   theta, 1e-3);
  CHECK(q.grad(0) == doctest::Approx(3.0 + 1.0).epsilon(1e-9));
  CHECK(q.grad(1) == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(q.grad(2) == doctest::Approx(2.0).epsilon(1e-9));

  const FdGradient flagged = fd_gradient([](const VectorXd& t) { return t(1) > -1.0 ? std::log(-1.0) : 0.0; }, theta, 1e-4);
  CHECK_FALSE(flagged.ok());
  CHECK_FALSE(flagged.flagged[0]);
  CHECK(flagged.flagged[1]);

  const auto data = fixture::regression_1d(20, 11);
  const Hyperparams h{KernelSpec::make(KernelFamily::Matern52, 0.8, 1.2), LikelihoodSpec::gaussian(0.1)};
  const FdGradient g = fd_gradient(
      [&](const VectorXd& t) {
        const Hyperparams hh = unpack(h, ThetaLayout::all_for(h.likelihood), t);
        return exact_gp_logml(data.X, data.y, hh.kernel, hh.likelihood.noise());
      },
      full_theta(h), 1e-4);
  const VectorXd an = exact_gp_logml_grad(data.X, data.y, h.kernel, 0.1);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(std::abs(g.grad(i) - an(i)) <= 1e-4 * std::abs(an(i)));
}

TEST_CASE("nlpd") {
  const LikelihoodSpec gauss = LikelihoodSpec::gaussian(0.5);
  const Marginals one{VectorXd::Constant(1, 0.7), VectorXd::Constant(1, 0.2)};
  CHECK(nlpd(gauss, one, VectorXd::Constant(1, 0.7)) == doctest::Approx(0.5 * std::log(2 * M_PI * 0.7)).epsilon(1e-14));

  const auto toy = fixture::toy_task();
  const Marginals prior = predict(SparseState(toy.Z), toy.hyper, toy.X, toy.X);
  CHECK(nlpd(toy.hyper.likelihood, prior, toy.y) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  std::mt19937_64 rng(41);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> uv(0.05, 3.0);
  Marginals m{VectorXd(10), VectorXd(10)};
  VectorXd y(10);
  double ref = 0.0;
  for (int i = 0; i < 10; ++i) {
    m.mean(i) = nd(rng);
    m.var(i) = uv(rng);
    y(i) = i % 3 == 0 ? 1.0 : 0.0;
    const double s = y(i) > 0.5 ? 1.0 : -1.0;
    ref -= std::log(oracle::simpson_expect(m.mean(i), m.var(i), [&](double f) { return oracle::normal_cdf(s * f); }));
  }
  CHECK(std::abs(nlpd(LikelihoodSpec::probit(), m, y) - ref / 10.0) < 1e-8);
  CHECK_THROWS_AS(nlpd(gauss, one, VectorXd::Zero(2)), DimensionMismatch);
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate(10));
  cfg.e_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(10), InvalidArgument);
  cfg = {};
  cfg.batch_size = 11;
  CHECK_THROWS_AS(cfg.validate(10), InvalidArgument);
  cfg = {};
  cfg.model = ModelKind::Qsvgp;
  CHECK_THROWS_AS(cfg.validate(10), InvalidArgument);
  cfg.objective = MstepObjective::Standard;
  CHECK_NOTHROW(cfg.validate(10));
  cfg = {};
  cfg.model = ModelKind::Tvgp;
  cfg.batch_size = 5;
  CHECK_THROWS_AS(cfg.validate(10), InvalidArgument);
  cfg = {};
  cfg.m_rate = -1.0;
  CHECK_THROWS_AS(cfg.validate(10), InvalidArgument);
  CHECK(parse_model_kind("tsvgp") == ModelKind::Tsvgp);
  CHECK(parse_objective("standard") == MstepObjective::Standard);
  CHECK_THROWS_AS(parse_model_kind("svgp"), InvalidArgument);
}

TEST_CASE("no E or M steps records only the initial metrics") {
  const auto toy = fixture::toy_task();
  TrainConfig cfg;
  cfg.e_steps = 0;
  cfg.m_steps = 0;
  const FitResult r = run_em(toy_data(toy), toy.hyper, toy.Z, cfg);
  REQUIRE(r.trace.rows.size() == 1);
  CHECK(r.trace.rows[0].iter == 0);
  CHECK(r.trace.rows[0].nlpd_train == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(r.trace.rows[0].elbo == doctest::Approx(model_elbo(r.state, toy.hyper, toy.X, toy.y)));
}

TEST_CASE("conjugate EM finds the maximum of the exact log marginal likelihood") {
  const auto data = fixture::regression_1d(30, 12, 0.3);
  const Hyperparams init{KernelSpec::make(KernelFamily::SquaredExponential, 1.0, 1.0), LikelihoodSpec::gaussian(1.0)};
  TrainConfig cfg;
  cfg.model = ModelKind::Tvgp;
  cfg.e_steps = 1;
  cfg.e_rate = 1.0;
  cfg.m_to_convergence = true;
  cfg.m_rate = 0.05;
  cfg.m_tol = 1e-7;
  cfg.m_max_iters = 3000;
  cfg.outer_iters = 60;
  const FitResult r = run_em({data.X, data.y, MatrixXd(0, 1), VectorXd(0)}, init, std::nullopt, cfg);
  const VectorXd best = maximize_logml(data.X, data.y, full_theta(init), KernelFamily::SquaredExponential);
  const VectorXd got = full_theta(r.hyper);
  CHECK((got - best).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("conjugate proposed objective tracks the exact log marginal likelihood") {
  const auto data = fixture::regression_1d(30, 13, 0.3);
  const Hyperparams init{KernelSpec::make(KernelFamily::Matern52, 1.0, 1.0), LikelihoodSpec::gaussian(0.2)};
  for (ModelKind kind : {ModelKind::Tvgp, ModelKind::Tsvgp}) {
    TrainConfig cfg;
    cfg.model = kind;
    cfg.e_steps = 1;
    cfg.e_rate = 1.0;
    cfg.m_steps = 5;
    cfg.m_rate = 0.05;
    cfg.outer_iters = 6;
    cfg.layout = ThetaLayout{{ThetaParam::LogLengthscale, ThetaParam::LogVariance}};
    const std::optional<InducingInputs> Z =
        kind == ModelKind::Tsvgp ? std::optional<InducingInputs>(InducingInputs(data.X)) : std::nullopt;
    const FitResult r = run_em({data.X, data.y, MatrixXd(0, 1), VectorXd(0)}, init, Z, cfg);
    for (std::size_t i = 1; i < r.trace.rows.size(); ++i) {
      const TraceRow& row = r.trace.rows[i];
      CHECK(row.failure.empty());
      const Hyperparams h = unpack(init, ThetaLayout::all_for(init.likelihood), row.theta);
      const double tol = kind == ModelKind::Tvgp ? 1e-8 : 1e-6;
      CHECK(std::abs(row.objective - exact_gp_logml(data.X, data.y, h.kernel, h.likelihood.noise())) < tol);
    }
  }
}

TEST_CASE("E-only runs keep theta; M-only runs keep the variational state") {
  const auto toy = fixture::toy_task();
  for (ModelKind kind : {ModelKind::Tvgp, ModelKind::Tsvgp, ModelKind::Qsvgp}) {
    TrainConfig cfg;
    cfg.model = kind;
    cfg.objective = kind == ModelKind::Qsvgp ? MstepObjective::Standard : MstepObjective::Proposed;
    cfg.outer_iters = 3;
    cfg.m_steps = 0;
    const FitResult e_only = run_em(toy_data(toy), toy.hyper, toy.Z, cfg);
    for (const TraceRow& row : e_only.trace.rows) CHECK(row.theta == full_theta(toy.hyper));

    cfg.e_steps = 0;
    cfg.m_steps = 3;
    const FitResult m_only = run_em(toy_data(toy), toy.hyper, e_only.state, cfg);
    CHECK(full_theta(m_only.hyper) != full_theta(toy.hyper));
    std::visit(
        [&](const auto& before) {
          using T = std::decay_t<decltype(before)>;
          const T& after = std::get<T>(m_only.state);
          if constexpr (std::is_same_v<T, SiteParams>) {
            CHECK(after.lambda1 == before.lambda1);
            CHECK(after.lambda2 == before.lambda2);
          } else if constexpr (std::is_same_v<T, SparseState>) {
            REQUIRE(after.shadow().has_value());
            CHECK(after.shadow()->lambda1 == before.shadow()->lambda1);
            CHECK(after.shadow()->lambda2 == before.shadow()->lambda2);
          } else {
            CHECK(after.eta.eta1 == before.eta.eta1);
            CHECK(after.eta.eta2 == before.eta.eta2);
          }
        },
        e_only.state);
  }
}

TEST_CASE("identical config and seed give identical traces") {
  const auto toy = fixture::toy_task();
  TrainConfig cfg;
  cfg.model = ModelKind::Tsvgp;
  cfg.batch_size = 20;
  cfg.outer_iters = 5;
  cfg.seed = 17;
  const FitResult a = run_em(toy_data(toy), toy.hyper, toy.Z, cfg);
  const FitResult b = run_em(toy_data(toy), toy.hyper, toy.Z, cfg);
  CHECK(same_metrics(a.trace, b.trace));
  cfg.seed = 18;
  const FitResult c = run_em(toy_data(toy), toy.hyper, toy.Z, cfg);
  CHECK_FALSE(same_metrics(a.trace, c.trace));
}

TEST_CASE("trace bookkeeping") {
  const auto toy = fixture::toy_task();
  TrainConfig cfg;
  cfg.outer_iters = 4;
  TrainData data = toy_data(toy);
  data.X_test = toy.X.topRows(20);
  data.y_test = toy.y.head(20);
  const FitResult r = run_em(data, toy.hyper, toy.Z, cfg);
  REQUIRE(r.trace.rows.size() == 5);
  for (std::size_t i = 1; i < r.trace.rows.size(); ++i) {
    const TraceRow& row = r.trace.rows[i];
    CHECK(row.iter == static_cast<int>(i));
    CHECK(row.failure.empty());
    CHECK(std::isfinite(row.elbo));
    CHECK(std::isfinite(row.nlpd_test));
    CHECK(row.seconds >= r.trace.rows[i - 1].seconds);
  }
  CHECK(r.trace.rows.back().elbo > r.trace.rows.front().elbo);
  const auto cols = r.trace.columns();
  CHECK(cols.front() == "iter");
  CHECK(cols[5] == "theta_0");
  CHECK(cols.back() == "jitter_max");
}

TEST_CASE("proposed objective converges in fewer outer iterations on the toy task") {
  const auto toy = fixture::toy_task(2.5);
  TrainConfig cfg;
  cfg.layout = ThetaLayout{{ThetaParam::LogVariance}};
  cfg.e_to_convergence = true;
  cfg.m_to_convergence = true;
  cfg.m_rate = 0.05;
  cfg.outer_iters = 15;
  cfg.model = ModelKind::Tsvgp;
  const FitResult proposed = run_em(toy_data(toy), toy.hyper, toy.Z, cfg);
  cfg.model = ModelKind::Qsvgp;
  cfg.objective = MstepObjective::Standard;
  const FitResult standard = run_em(toy_data(toy), toy.hyper, toy.Z, cfg);
  double best = -1e300;
  for (const auto* t : {&proposed.trace, &standard.trace})
    for (const auto& row : t->rows) best = std::max(best, row.elbo);
  auto first_within = [&](const Trace& t) {
    for (const auto& row : t.rows)
      if (row.elbo >= best - 1e-2) return row.iter;
    return 1 << 20;
  };
  CHECK(2 * first_within(proposed.trace) <= first_within(standard.trace));
}
