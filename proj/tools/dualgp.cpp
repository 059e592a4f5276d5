// dualgp: fit, scan and benchmark dual-parameterized (sparse) variational GPs.

#include "dualgp/dataset.hpp"
#include "dualgp/error.hpp"
#include "dualgp/qsvgp.hpp"
#include "dualgp/trainer.hpp"
#include "dualgp/tsvgp.hpp"
#include "dualgp/tvgp.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace dualgp;

namespace {

// Model/data knobs shared by every command that builds a GP.
struct ModelOptions {
  std::string task = "cls";
  std::string kernel = "matern52";
  double lengthscale = 1.0;
  double variance = 1.0;
  double noise = 1.0;
  Eigen::Index m = 50;
  std::string inducing = "kmeans";
  int quadrature = 20;
  std::vector<std::string> fix;
  bool raw = false;
  std::uint64_t seed = 0;

  void add_to(CLI::App* app, bool with_m = true) {
    app->add_option("--task", task, "reg or cls")->check(CLI::IsMember({"reg", "cls", "regression", "classification"}));
    app->add_option("--kernel", kernel, "se or matern52");
    app->add_option("--lengthscale", lengthscale, "initial kernel lengthscale")->check(CLI::PositiveNumber);
    app->add_option("--variance", variance, "initial kernel magnitude")->check(CLI::PositiveNumber);
    app->add_option("--noise", noise, "initial Gaussian noise variance")->check(CLI::PositiveNumber);
    if (with_m) app->add_option("--m", m, "number of inducing points")->check(CLI::PositiveNumber);
    app->add_option("--inducing", inducing, "kmeans or grid (1-D only)")->check(CLI::IsMember({"kmeans", "grid"}));
    app->add_option("--quadrature", quadrature, "Gauss-Hermite order")->check(CLI::Range(2, 500));
    app->add_option("--fix", fix, "hyperparameters held fixed: lengthscale, variance, noise");
    app->add_flag("--raw", raw, "skip input/target standardization");
  }

  json to_json() const {
    return {{"task", task},         {"kernel", kernel},     {"lengthscale", lengthscale},
            {"variance", variance}, {"noise", noise},       {"m", m},
            {"inducing", inducing}, {"quadrature", quadrature}, {"fix", fix},
            {"raw", raw}};
  }

  static ModelOptions from_json(const json& j) {
    ModelOptions o;
    o.task = j.value("task", o.task);
    o.kernel = j.value("kernel", o.kernel);
    o.lengthscale = j.value("lengthscale", o.lengthscale);
    o.variance = j.value("variance", o.variance);
    o.noise = j.value("noise", o.noise);
    o.m = j.value("m", o.m);
    o.inducing = j.value("inducing", o.inducing);
    o.quadrature = j.value("quadrature", o.quadrature);
    o.fix = j.value("fix", o.fix);
    o.raw = j.value("raw", o.raw);
    return o;
  }

  Hyperparams hyper() const {
    Hyperparams h;
    h.kernel = KernelSpec::make(parse_kernel_family(kernel), lengthscale, variance);
    h.likelihood = parse_task(task) == Task::Regression ? LikelihoodSpec::gaussian(noise, quadrature)
                                                        : LikelihoodSpec::probit(quadrature);
    return h;
  }

  ThetaLayout layout() const {
    ThetaLayout l = ThetaLayout::all_for(hyper().likelihood);
    for (const auto& name : fix) {
      ThetaParam p;
      if (name == "lengthscale") p = ThetaParam::LogLengthscale;
      else if (name == "variance") p = ThetaParam::LogVariance;
      else if (name == "noise") p = ThetaParam::LogNoise;
      else throw InvalidArgument("unknown hyperparameter '" + name + "' for --fix");
      std::erase(l.free, p);
    }
    return l;
  }

  InducingInputs inducing_for(const MatrixXd& X) const {
    const Eigen::Index k = std::min<Eigen::Index>(m, X.rows());
    if (inducing == "grid") {
      if (X.cols() != 1) throw InvalidArgument("--inducing grid needs one-dimensional inputs");
      return grid_inducing(X.minCoeff(), X.maxCoeff(), k);
    }
    return kmeans_inducing(X, k, seed);
  }
};

json versions() {
  return {{"dualgp", DUALGP_VERSION},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                        "." + std::to_string(EIGEN_MINOR_VERSION)},
          {"compiler", __VERSION__},
          {"cxx", __cplusplus}};
}

void write_manifest(const fs::path& path, const std::string& command, json config) {
  json j;
  j["command"] = command;
  j["config"] = std::move(config);
  j["versions"] = versions();
  j["sinc_task"] = {{"x_range", {-3.0 * M_PI, 3.0 * M_PI}}, {"noise_std", kSincNoiseStd}};
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

fs::path prepare_dir(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

Dataset load_train(const std::string& path, const ModelOptions& o) {
  Dataset d = load_csv(path, parse_task(o.task), !o.raw);
  std::cerr << "loaded " << path << ": n=" << d.size() << ", d=" << d.dim() << ", columns:";
  for (const auto& c : d.columns) std::cerr << ' ' << c;
  std::cerr << '\n';
  return d;
}

// "full" or a positive integer
std::optional<Eigen::Index> parse_batch(const std::string& s) {
  if (s == "full") return std::nullopt;
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || v < 1) throw InvalidArgument("--batch must be 'full' or a positive integer");
  return static_cast<Eigen::Index>(v);
}

std::vector<double> parse_grid(const std::string& spec) {
  // MIN:MAX:STEPS, geometrically spaced (hyperparameters are scale parameters)
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.size() != 3) throw InvalidArgument("--theta-grid must look like MIN:MAX:STEPS");
  const double lo = std::stod(parts[0]), hi = std::stod(parts[1]);
  const int steps = std::stoi(parts[2]);
  if (!(lo > 0.0 && hi >= lo) || steps < 1) throw InvalidArgument("--theta-grid needs 0 < MIN <= MAX and STEPS >= 1");
  std::vector<double> out;
  for (int i = 0; i < steps; ++i)
    out.push_back(steps == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(i) / (steps - 1)));
  return out;
}

std::vector<Eigen::Index> parse_int_list(const std::string& s, const char* flag) {
  std::vector<Eigen::Index> out;
  std::stringstream ss(s);
  for (std::string p; std::getline(ss, p, ',');) {
    try {
      const long long v = std::stoll(p);
      if (v < 1) throw std::out_of_range("non-positive");
      out.push_back(static_cast<Eigen::Index>(v));
    } catch (const std::exception&) {
      throw InvalidArgument(std::string(flag) + ": '" + p + "' is not a positive integer");
    }
  }
  if (out.empty()) throw InvalidArgument(std::string(flag) + " is empty");
  return out;
}

void write_model_csv(const fs::path& path, const FitResult& fit, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "field,i,j,value\n" << std::setprecision(17);
  auto put = [&](const std::string& f, Eigen::Index i, Eigen::Index j, double v) {
    out << f << ',' << i << ',' << j << ',' << v << '\n';
  };
  const VectorXd theta = full_theta(fit.hyper);
  const auto names = full_theta_names(fit.hyper);
  for (Eigen::Index k = 0; k < theta.size(); ++k) put(names[static_cast<std::size_t>(k)], 0, 0, theta(k));
  for (Eigen::Index k = 0; k < data.dim(); ++k) {
    put("x_mean", k, 0, data.norm.x_mean(k));
    put("x_scale", k, 0, data.norm.x_scale(k));
  }
  put("y_mean", 0, 0, data.norm.y_mean);
  put("y_scale", 0, 0, data.norm.y_scale);
  auto put_matrix = [&](const std::string& f, const MatrixXd& M) {
    for (Eigen::Index i = 0; i < M.rows(); ++i)
      for (Eigen::Index j = 0; j < M.cols(); ++j) put(f, i, j, M(i, j));
  };
  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, SiteParams>) {
          put_matrix("lambda1", s.lambda1);
          put_matrix("lambda2", s.lambda2);
        } else if constexpr (std::is_same_v<S, SparseState>) {
          put_matrix("Z", s.inducing().Z());
          put_matrix("lambda_bar1", s.tied().lambda_bar1);
          put_matrix("Lambda_bar2", s.tied().Lambda_bar2);
        } else {
          put_matrix("Z", s.inducing.Z());
          put_matrix("eta1", s.eta.eta1);
          put_matrix("eta2", s.eta.eta2);
        }
      },
      fit.state);
}

struct FitOptions {
  std::string model = "tsvgp";
  std::string data;
  std::string test;
  int e_steps = 4;
  int m_steps = 1;
  double e_rate = 0.7;
  double m_rate = 0.2;
  std::string batch = "full";
  std::string objective = "proposed";
  int iters = 20;
  std::uint64_t seed = 0;
  std::string out;
  bool e_converge = false;
  bool m_converge = false;
  double fd_step = 1e-4;

  json to_json() const {
    return {{"model", model},       {"data", data},         {"test", test},
            {"e_steps", e_steps},   {"m_steps", m_steps},   {"e_rate", e_rate},
            {"m_rate", m_rate},     {"batch", batch},       {"objective", objective},
            {"iters", iters},       {"seed", seed},         {"e_converge", e_converge},
            {"m_converge", m_converge}, {"fd_step", fd_step}};
  }

  static FitOptions from_json(const json& j) {
    FitOptions o;
    o.model = j.value("model", o.model);
    o.e_steps = j.value("e_steps", o.e_steps);
    o.m_steps = j.value("m_steps", o.m_steps);
    o.e_rate = j.value("e_rate", o.e_rate);
    o.m_rate = j.value("m_rate", o.m_rate);
    o.batch = j.value("batch", o.batch);
    o.objective = j.value("objective", o.objective);
    o.iters = j.value("iters", o.iters);
    o.seed = j.value("seed", o.seed);
    o.e_converge = j.value("e_converge", o.e_converge);
    o.m_converge = j.value("m_converge", o.m_converge);
    o.fd_step = j.value("fd_step", o.fd_step);
    return o;
  }

  TrainConfig config(const ModelOptions& mo) const {
    TrainConfig c;
    c.model = parse_model_kind(model);
    c.e_steps = e_steps;
    c.m_steps = m_steps;
    c.e_rate = e_rate;
    c.m_rate = m_rate;
    c.batch_size = parse_batch(batch);
    c.objective = parse_objective(objective);
    c.outer_iters = iters;
    c.seed = seed;
    c.fd_step = fd_step;
    c.quadrature_order = mo.quadrature;
    c.layout = mo.layout();
    c.e_to_convergence = e_converge;
    c.m_to_convergence = m_converge;
    return c;
  }
};

FitResult fit_dataset(const Dataset& train, const Dataset* test, const FitOptions& fo,
                      ModelOptions mo) {
  mo.seed = fo.seed;
  TrainData td{train.X, train.y, {}, {}};
  if (test) {
    td.X_test = test->X;
    td.y_test = test->y;
  }
  TrainConfig cfg = fo.config(mo);
  if (cfg.batch_size && *cfg.batch_size > train.size()) cfg.batch_size = train.size();
  std::optional<InducingInputs> Z;
  if (cfg.model != ModelKind::Tvgp) Z = mo.inducing_for(train.X);
  return run_em(td, mo.hyper(), Z, cfg);
}

int cmd_fit(const FitOptions& fo, const ModelOptions& mo) {
  const Dataset train = load_train(fo.data, mo);
  std::optional<Dataset> test;
  if (!fo.test.empty()) {
    test = load_csv(fo.test, parse_task(mo.task), false);
    apply_normalization(*test, train.norm);
  }
  const FitResult fit = fit_dataset(train, test ? &*test : nullptr, fo, mo);
  const fs::path dir = prepare_dir(fo.out);
  fit.trace.write_csv((dir / "trace.csv").string());
  write_model_csv(dir / "model.csv", fit, train);
  write_manifest(dir / "manifest.json", "fit", {{"fit", fo.to_json()}, {"model", mo.to_json()}});
  for (const auto& r : fit.trace.rows)
    if (!r.failure.empty()) std::cerr << "iteration " << r.iter << ": " << r.failure << '\n';
  const auto& last = fit.trace.rows.back();
  std::cout << "final elbo " << std::setprecision(10) << last.elbo << ", nlpd_train "
            << last.nlpd_train << " -> " << (dir / "trace.csv").string() << '\n';
  return 0;
}

struct ScanOptions {
  std::string model = "tsvgp";
  std::string data;
  std::string grid = "0.25:4:25";
  std::string objective = "both";
  std::string param = "variance";
  double theta_old = 1.0;
  double e_rate = 0.7;
  int jobs = 1;
  std::string out;
};

int cmd_bound_scan(const ScanOptions& so, ModelOptions mo) {
  const Dataset data = load_train(so.data, mo);
  const auto grid = parse_grid(so.grid);
  const ModelKind kind = parse_model_kind(so.model);
  if (kind == ModelKind::Qsvgp) throw InvalidArgument("bound-scan: --model must be tvgp or tsvgp");
  ThetaParam param;
  if (so.param == "variance") param = ThetaParam::LogVariance;
  else if (so.param == "lengthscale") param = ThetaParam::LogLengthscale;
  else if (so.param == "noise") param = ThetaParam::LogNoise;
  else throw InvalidArgument("--param must be variance, lengthscale or noise");
  const ThetaLayout one{{param}};

  Hyperparams h_old = unpack(mo.hyper(), one, VectorXd::Constant(1, std::log(so.theta_old)));
  TrainData td{data.X, data.y, {}, {}};
  TrainConfig cfg;
  cfg.model = kind;
  cfg.e_rate = so.e_rate;
  cfg.m_steps = 0;
  cfg.outer_iters = 1;
  cfg.e_to_convergence = true;
  cfg.e_tol = 1e-10;
  cfg.e_max_iters = 5000;
  std::optional<InducingInputs> Z;
  if (kind == ModelKind::Tsvgp) Z = mo.inducing_for(data.X);
  const FitResult fit = run_em(td, h_old, Z, cfg);
  if (!fit.trace.rows.back().failure.empty())
    throw Error("bound-scan: E-step failed: " + fit.trace.rows.back().failure);

  const bool want_prop = so.objective == "both" || so.objective == "proposed";
  const bool want_std = so.objective == "both" || so.objective == "standard";
  auto eval_point = [&](double value) {
    const Hyperparams h = unpack(h_old, one, VectorXd::Constant(1, std::log(value)));
    double prop = NAN, stdv = NAN;
    if (const auto* s = std::get_if<SiteParams>(&fit.state)) {
      if (want_prop) prop = tvgp_mstep_objective(*s, data.X, data.y, h);
      if (want_std)
        stdv = tvgp_standard_mstep_objective(tvgp_posterior(*s, h_old.kernel, data.X), data.X, data.y, h);
    } else {
      const auto& sp = std::get<SparseState>(fit.state);
      if (want_prop) prop = tsvgp_mstep_objective(sp, data.X, data.y, h);
      if (want_std)
        stdv = sparse_standard_objective(tsvgp_moments(sp, h_old.kernel), sp.inducing(), data.X, data.y, h);
    }
    return std::pair{prop, stdv};
  };

  std::vector<std::pair<double, double>> values(grid.size());
  std::vector<std::future<void>> pending;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    auto work = [&, g] { values[g] = eval_point(grid[g]); };
    if (so.jobs > 1) {
      pending.push_back(std::async(std::launch::async, work));
      if (pending.size() >= static_cast<std::size_t>(so.jobs)) {
        for (auto& f : pending) f.get();
        pending.clear();
      }
    } else {
      work();
    }
  }
  for (auto& f : pending) f.get();

  const fs::path dir = prepare_dir(so.out);
  std::ofstream out(dir / "bound_scan.csv");
  out << so.param << ",proposed,standard,gap\n" << std::setprecision(17);
  double worst_gap = INFINITY;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto [p, s] = values[g];
    out << grid[g] << ',' << p << ',' << s << ',' << p - s << '\n';
    if (std::isfinite(p - s)) worst_gap = std::min(worst_gap, p - s);
  }
  write_manifest(dir / "manifest.json", "bound-scan",
                 {{"model", so.model}, {"data", so.data}, {"theta_grid", so.grid},
                  {"objective", so.objective}, {"param", so.param}, {"theta_old", so.theta_old},
                  {"e_rate", so.e_rate}, {"seed", mo.seed}, {"model_options", mo.to_json()}});
  if (want_prop && want_std)
    std::cout << "min(proposed - standard) over grid: " << std::setprecision(6) << worst_gap << '\n';
  return 0;
}

int cmd_compare_estep(const std::string& path, int steps, double rate, const std::string& out_dir,
                      ModelOptions mo) {
  const Dataset data = load_train(path, mo);
  const InducingInputs Z = mo.inducing_for(data.X);
  const Hyperparams h = mo.hyper();
  SparseState s(Z);
  QState q = QState::prior(Z, h.kernel);
  const fs::path dir = prepare_dir(out_dir);
  std::ofstream out(dir / "estep_compare.csv");
  out << "step,max_abs_mean_diff,max_abs_cov_diff,max_discrepancy\n" << std::setprecision(17);
  double worst = 0.0;
  for (int k = 1; k <= steps; ++k) {
    s = tsvgp_estep_full(s, data.X, data.y, h, rate);
    q = qsvgp_estep_full(q, data.X, data.y, h, rate);
    const GaussianMoments a = tsvgp_moments(s, h.kernel);
    const GaussianMoments b = qsvgp_moments(q);
    const double dm = (a.mean() - b.mean()).cwiseAbs().maxCoeff();
    const double dS = (a.cov() - b.cov()).cwiseAbs().maxCoeff();
    worst = std::max({worst, dm, dS});
    out << k << ',' << dm << ',' << dS << ',' << std::max(dm, dS) << '\n';
  }
  write_manifest(dir / "manifest.json", "compare-estep",
                 {{"data", path}, {"steps", steps}, {"rate", rate}, {"seed", mo.seed},
                  {"model_options", mo.to_json()}});
  std::cout << "max discrepancy over " << steps << " steps: " << std::setprecision(6) << worst << '\n';
  return 0;
}

int cmd_benchmark(const std::string& m_list, const std::string& nb_list, Eigen::Index n, int steps,
                  Eigen::Index m_fixed, double rate, const std::string& out_dir, ModelOptions mo) {
  const auto ms = parse_int_list(m_list, "--m-list");
  const auto nbs = parse_int_list(nb_list, "--nb-list");
  Dataset data = gen_sinc_classification(n, mo.seed);
  standardize(data);
  const Hyperparams h = mo.hyper();
  const fs::path dir = prepare_dir(out_dir);
  std::ofstream out(dir / "benchmark.csv");
  out << "model,sweep,m,n,n_b,steps,seconds\n" << std::setprecision(9);

  auto time_run = [&](ModelKind kind, Eigen::Index m, Eigen::Index nb) {
    const InducingInputs Z = grid_inducing(data.X.minCoeff(), data.X.maxCoeff(), m);
    std::mt19937_64 rng(mo.seed);
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::vector<std::vector<Eigen::Index>> batches;
    for (int k = 0; k < steps; ++k) {
      std::shuffle(perm.begin(), perm.end(), rng);
      batches.emplace_back(perm.begin(), perm.begin() + std::min(nb, n));
    }
    const auto t0 = std::chrono::steady_clock::now();
    if (kind == ModelKind::Tsvgp) {
      SparseState s(Z);
      for (const auto& b : batches) s = tsvgp_estep_step(s, data.X, data.y, b, h, rate);
    } else {
      QState q = QState::prior(Z, h.kernel);
      for (const auto& b : batches) q = qsvgp_estep_step(q, data.X, data.y, b, h, rate);
    }
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  for (ModelKind kind : {ModelKind::Tsvgp, ModelKind::Qsvgp}) {
    for (Eigen::Index m : ms) {
      const double sec = time_run(kind, m, n);
      out << to_string(kind) << ",m," << m << ',' << n << ',' << n << ',' << steps << ',' << sec << '\n';
      std::cerr << to_string(kind) << " m=" << m << " n_b=" << n << ": " << sec << " s\n";
    }
    for (Eigen::Index nb : nbs) {
      const double sec = time_run(kind, m_fixed, nb);
      out << to_string(kind) << ",n_b," << m_fixed << ',' << n << ',' << nb << ',' << steps << ','
          << sec << '\n';
      std::cerr << to_string(kind) << " m=" << m_fixed << " n_b=" << nb << ": " << sec << " s\n";
    }
  }
  write_manifest(dir / "manifest.json", "benchmark",
                 {{"m_list", m_list}, {"nb_list", nb_list}, {"n", n}, {"steps", steps},
                  {"m_fixed", m_fixed}, {"rate", rate}, {"seed", mo.seed},
                  {"model_options", mo.to_json()}});
  return 0;
}

int cmd_eval(const std::string& model_dir, const std::string& path, int folds, std::uint64_t seed,
             int jobs, std::string out_dir) {
  std::ifstream in(fs::path(model_dir) / "manifest.json");
  if (!in) throw DataError("no manifest.json in '" + model_dir + "'; run fit first");
  const json manifest = json::parse(in);
  if (manifest.value("command", "") != "fit") throw DataError("manifest in '" + model_dir + "' is not from fit");
  const FitOptions fo = FitOptions::from_json(manifest["config"]["fit"]);
  ModelOptions mo = ModelOptions::from_json(manifest["config"]["model"]);

  const Dataset raw = load_csv(path, parse_task(mo.task), false);
  const auto splits = kfold(raw.size(), folds, seed);
  struct FoldResult {
    double elbo, nlpd_train, nlpd_test;
    std::string failure;
  };
  std::vector<FoldResult> results(splits.size());
  auto run_fold = [&](std::size_t f) {
    Dataset train = raw.subset(splits[f].train);
    Dataset test = raw.subset(splits[f].test);
    if (!mo.raw) {
      standardize(train);
      apply_normalization(test, train.norm);
    }
    const FitResult fit = fit_dataset(train, &test, fo, mo);
    const auto& last = fit.trace.rows.back();
    results[f] = {last.elbo, last.nlpd_train, last.nlpd_test, last.failure};
  };
  std::vector<std::future<void>> pending;
  for (std::size_t f = 0; f < splits.size(); ++f) {
    if (jobs > 1) pending.push_back(std::async(std::launch::async, run_fold, f));
    else run_fold(f);
  }
  for (auto& p : pending) p.get();

  if (out_dir.empty()) out_dir = model_dir;
  const fs::path dir = prepare_dir(out_dir);
  std::ofstream out(dir / "eval.csv");
  out << "fold,n_train,n_test,elbo,nlpd_train,nlpd_test\n" << std::setprecision(17);
  double mean_nlpd = 0.0;
  for (std::size_t f = 0; f < splits.size(); ++f) {
    const auto& r = results[f];
    out << f << ',' << splits[f].train.size() << ',' << splits[f].test.size() << ',' << r.elbo << ','
        << r.nlpd_train << ',' << r.nlpd_test << '\n';
    if (!r.failure.empty()) std::cerr << "fold " << f << ": " << r.failure << '\n';
    mean_nlpd += r.nlpd_test / static_cast<double>(splits.size());
  }
  write_manifest(dir / "eval_manifest.json", "eval",
                 {{"model_dir", model_dir}, {"data", path}, {"folds", folds}, {"seed", seed},
                  {"fit", fo.to_json()}, {"model", mo.to_json()}});
  std::cout << "mean test nlpd over " << folds << " folds: " << std::setprecision(8) << mean_nlpd << '\n';
  return 0;
}

int cmd_gen_sinc(Eigen::Index n, std::uint64_t seed, const std::string& out) {
  const Dataset d = gen_sinc_classification(n, seed);
  const fs::path p(out);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_csv(out, d);
  write_manifest(fs::path(out + ".manifest.json"), "gen-sinc", {{"n", n}, {"seed", seed}, {"out", out}});
  std::cout << "wrote " << n << " points to " << out << " (positive fraction " << d.y.mean() << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-parameterized sparse variational Gaussian processes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(DUALGP_VERSION));

  FitOptions fo;
  ModelOptions fit_mo;
  auto* fit = app.add_subcommand("fit", "Run variational EM and write trace.csv, model.csv, manifest.json");
  fit->add_option("--model", fo.model, "tvgp, tsvgp or qsvgp")->check(CLI::IsMember({"tvgp", "tsvgp", "qsvgp"}));
  fit->add_option("--data", fo.data, "training CSV (header row, target last)")->required();
  fit->add_option("--test", fo.test, "held-out CSV for nlpd_test");
  fit->add_option("--e-steps", fo.e_steps, "natural-gradient steps per E-step")->check(CLI::NonNegativeNumber);
  fit->add_option("--m-steps", fo.m_steps, "Adam steps per M-step")->check(CLI::NonNegativeNumber);
  fit->add_option("--e-rate", fo.e_rate, "E-step rate r in (0,1]");
  fit->add_option("--m-rate", fo.m_rate, "Adam learning rate");
  fit->add_option("--batch", fo.batch, "minibatch size or 'full'");
  fit->add_option("--objective", fo.objective, "proposed or standard")->check(CLI::IsMember({"proposed", "standard"}));
  fit->add_option("--iters", fo.iters, "outer EM iterations")->check(CLI::NonNegativeNumber);
  fit->add_option("--seed", fo.seed, "RNG seed (minibatches, k-means)");
  fit->add_option("--out", fo.out, "output directory")->required();
  fit->add_flag("--e-converge", fo.e_converge, "run each E-step to convergence (max change < 1e-8)");
  fit->add_flag("--m-converge", fo.m_converge, "run each M-step to convergence");
  fit->add_option("--fd-step", fo.fd_step, "finite-difference step in log space");
  fit_mo.add_to(fit);

  ScanOptions so;
  ModelOptions scan_mo;
  auto* scan = app.add_subcommand("bound-scan", "Proposed vs standard M-step objective over a hyperparameter grid");
  scan->add_option("--model", so.model, "tvgp or tsvgp")->check(CLI::IsMember({"tvgp", "tsvgp"}));
  scan->add_option("--data", so.data, "training CSV")->required();
  scan->add_option("--theta-grid", so.grid, "MIN:MAX:STEPS, geometric spacing");
  scan->add_option("--objective", so.objective, "both, proposed or standard")->check(CLI::IsMember({"both", "proposed", "standard"}));
  scan->add_option("--param", so.param, "scanned hyperparameter: variance, lengthscale or noise");
  scan->add_option("--theta-old", so.theta_old, "value at which the E-step is converged")->check(CLI::PositiveNumber);
  scan->add_option("--e-rate", so.e_rate, "E-step rate");
  scan->add_option("--jobs", so.jobs, "grid points evaluated in parallel");
  scan->add_option("--seed", scan_mo.seed, "k-means seed");
  scan->add_option("--out", so.out, "output directory")->required();
  scan_mo.add_to(scan);

  std::string cmp_data, cmp_out;
  int cmp_steps = 20;
  double cmp_rate = 0.7;
  ModelOptions cmp_mo;
  auto* cmp = app.add_subcommand("compare-estep", "Per-step discrepancy between t-SVGP and q-SVGP E-step iterates");
  cmp->add_option("--data", cmp_data, "training CSV")->required();
  cmp->add_option("--steps", cmp_steps, "full-batch steps")->check(CLI::PositiveNumber);
  cmp->add_option("--rate", cmp_rate, "step size");
  cmp->add_option("--seed", cmp_mo.seed, "k-means seed");
  cmp->add_option("--out", cmp_out, "output directory")->required();
  cmp_mo.add_to(cmp);

  std::string m_list = "50,100,150,200,250", nb_list = "100,200,400,800", bench_out;
  Eigen::Index bench_n = 2000, bench_m = 100;
  int bench_steps = 100;
  double bench_rate = 0.7;
  ModelOptions bench_mo;
  auto* bench = app.add_subcommand("benchmark", "Wall-seconds per E-step sweep over m and batch size");
  bench->add_option("--m-list", m_list, "comma-separated inducing-point counts");
  bench->add_option("--nb-list", nb_list, "comma-separated batch sizes at fixed --m");
  bench->add_option("--n", bench_n, "synthetic dataset size")->check(CLI::PositiveNumber);
  bench->add_option("--steps", bench_steps, "E-steps per configuration")->check(CLI::PositiveNumber);
  bench->add_option("--m", bench_m, "inducing points for the batch-size sweep")->check(CLI::PositiveNumber);
  bench->add_option("--rate", bench_rate, "step size");
  bench->add_option("--seed", bench_mo.seed, "data and batch seed");
  bench->add_option("--out", bench_out, "output directory")->required();
  bench_mo.add_to(bench, false);

  std::string eval_dir, eval_data, eval_out;
  int eval_folds = 5, eval_jobs = 1;
  std::uint64_t eval_seed = 0;
  auto* eval = app.add_subcommand("eval", "k-fold refit of a fit configuration; per-fold ELBO/NLPD");
  eval->add_option("--model-dir", eval_dir, "directory written by fit")->required();
  eval->add_option("--data", eval_data, "CSV to split")->required();
  eval->add_option("--folds", eval_folds, "number of folds")->check(CLI::Range(2, 1000000));
  eval->add_option("--seed", eval_seed, "fold shuffle seed");
  eval->add_option("--jobs", eval_jobs, "folds fitted in parallel");
  eval->add_option("--out", eval_out, "output directory (default: --model-dir)");

  Eigen::Index gen_n = 100;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-sinc", "Write the thresholded-sinc toy classification task as CSV");
  gen->add_option("--n", gen_n, "number of points")->check(CLI::Range(2, 100000000));
  gen->add_option("--seed", gen_seed, "RNG seed");
  gen->add_option("--out", gen_out, "output CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fit) return cmd_fit(fo, fit_mo);
    if (*scan) return cmd_bound_scan(so, scan_mo);
    if (*cmp) return cmd_compare_estep(cmp_data, cmp_steps, cmp_rate, cmp_out, cmp_mo);
    if (*bench)
      return cmd_benchmark(m_list, nb_list, bench_n, bench_steps, bench_m, bench_rate, bench_out, bench_mo);
    if (*eval) return cmd_eval(eval_dir, eval_data, eval_folds, eval_seed, eval_jobs, eval_out);
    if (*gen) return cmd_gen_sinc(gen_n, gen_seed, gen_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
