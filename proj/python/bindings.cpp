#include "dualgp/dataset.hpp"
#include "dualgp/error.hpp"
#include "dualgp/trainer.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace dualgp;

namespace {

py::dict trace_to_dict(const Trace& t) {
  py::dict out;
  py::list iter, elbo, objective, nlpd_train, nlpd_test, theta, failure;
  for (const TraceRow& r : t.rows) {
    iter.append(r.iter);
    elbo.append(r.elbo);
    objective.append(r.objective);
    nlpd_train.append(r.nlpd_train);
    nlpd_test.append(r.nlpd_test);
    theta.append(r.theta);
    failure.append(r.failure);
  }
  out["iter"] = iter;
  out["elbo"] = elbo;
  out["objective"] = objective;
  out["nlpd_train"] = nlpd_train;
  out["nlpd_test"] = nlpd_test;
  out["theta"] = theta;
  out["theta_names"] = t.theta_names;
  out["failure"] = failure;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
  mod.doc() = "Dual-parameter variational Gaussian processes";
  mod.attr("__version__") = DUALGP_VERSION;

  auto base = py::register_exception<Error>(mod, "Error");
  py::register_exception<InvalidArgument>(mod, "InvalidArgument", base.ptr());
  py::register_exception<DimensionMismatch>(mod, "DimensionMismatch", base.ptr());
  py::register_exception<DegenerateGaussian>(mod, "DegenerateGaussian", base.ptr());
  py::register_exception<IndefiniteMatrix>(mod, "IndefiniteMatrix", base.ptr());
  py::register_exception<DataError>(mod, "DataError", base.ptr());

  py::enum_<KernelFamily>(mod, "KernelFamily")
      .value("SquaredExponential", KernelFamily::SquaredExponential)
      .value("Matern52", KernelFamily::Matern52);

  py::class_<KernelSpec>(mod, "KernelSpec")
      .def(py::init([](KernelFamily family, double lengthscale, double variance) {
             return KernelSpec::make(family, lengthscale, variance);
           }),
           py::arg("family") = KernelFamily::Matern52, py::arg("lengthscale") = 1.0, py::arg("variance") = 1.0)
      .def_readwrite("family", &KernelSpec::family)
      .def_readwrite("log_lengthscale", &KernelSpec::log_lengthscale)
      .def_readwrite("log_variance", &KernelSpec::log_variance)
      .def_property_readonly("lengthscale", &KernelSpec::lengthscale)
      .def_property_readonly("variance", &KernelSpec::variance);

  mod.def("eval_matrix", &eval_matrix, py::arg("kernel"), py::arg("A"), py::arg("B"));
  mod.def("eval_diag", &eval_diag, py::arg("kernel"), py::arg("A"));

  py::class_<LikelihoodSpec>(mod, "LikelihoodSpec")
      .def_static("gaussian", &LikelihoodSpec::gaussian, py::arg("noise_variance"), py::arg("quadrature_order") = 20)
      .def_static("probit", &LikelihoodSpec::probit, py::arg("quadrature_order") = 20)
      .def_property_readonly("noise", &LikelihoodSpec::noise);

  py::class_<Expectations>(mod, "Expectations")
      .def_readonly("ell", &Expectations::ell)
      .def_readonly("alpha", &Expectations::alpha)
      .def_readonly("beta", &Expectations::beta);
  mod.def("expectations", &expectations, py::arg("likelihood"), py::arg("y"), py::arg("mean"), py::arg("var"));
  mod.def("predictive_log_density", &predictive_log_density, py::arg("likelihood"), py::arg("y"), py::arg("mean"),
          py::arg("var"));

  py::class_<Hyperparams>(mod, "Hyperparams")
      .def(py::init<KernelSpec, LikelihoodSpec>(), py::arg("kernel"), py::arg("likelihood"))
      .def_readwrite("kernel", &Hyperparams::kernel)
      .def_readwrite("likelihood", &Hyperparams::likelihood);

  py::class_<Marginals>(mod, "Marginals")
      .def_readonly("mean", &Marginals::mean)
      .def_readonly("var", &Marginals::var);

  py::class_<SiteParams>(mod, "SiteParams")
      .def_static("zeros", &SiteParams::zeros, py::arg("n"))
      .def_readwrite("lambda1", &SiteParams::lambda1)
      .def_readwrite("lambda2", &SiteParams::lambda2);
  mod.def("conjugate_sites", &conjugate_sites, py::arg("y"), py::arg("noise_variance"));
  mod.def("tvgp_estep", &tvgp_estep, py::arg("sites"), py::arg("X"), py::arg("y"), py::arg("hyper"),
          py::arg("rate"), py::arg("iters") = 1);
  mod.def("tvgp_predict", &tvgp_predict, py::arg("sites"), py::arg("kernel"), py::arg("X"), py::arg("Xstar"));
  mod.def("tvgp_elbo", &tvgp_elbo, py::arg("sites"), py::arg("X"), py::arg("y"), py::arg("hyper"));
  mod.def("tvgp_logZ", &tvgp_logZ, py::arg("sites"), py::arg("kernel"), py::arg("X"));
  mod.def("tvgp_mstep_objective", &tvgp_mstep_objective, py::arg("sites"), py::arg("X"), py::arg("y"),
          py::arg("hyper"));
  mod.def("exact_gp_logml", &exact_gp_logml, py::arg("X"), py::arg("y"), py::arg("kernel"), py::arg("noise_variance"));

  py::class_<InducingInputs>(mod, "InducingInputs")
      .def(py::init<MatrixXd>(), py::arg("Z"))
      .def_property_readonly("Z", &InducingInputs::Z)
      .def_property_readonly("size", &InducingInputs::size);
  mod.def("grid_inducing", &grid_inducing, py::arg("lo"), py::arg("hi"), py::arg("m"));

  py::class_<TiedSites>(mod, "TiedSites")
      .def_readonly("lambda_bar1", &TiedSites::lambda_bar1)
      .def_readonly("Lambda_bar2", &TiedSites::Lambda_bar2);

  py::class_<SparseState>(mod, "SparseState")
      .def(py::init<InducingInputs>(), py::arg("inducing"))
      .def_property_readonly("inducing", &SparseState::inducing)
      .def_property_readonly("tied", &SparseState::tied)
      .def("enable_shadow", &SparseState::enable_shadow, py::arg("n"));
  mod.def("tsvgp_estep_full", &tsvgp_estep_full, py::arg("state"), py::arg("X"), py::arg("y"), py::arg("hyper"),
          py::arg("rate"));
  mod.def("tsvgp_estep_step", &tsvgp_estep_step, py::arg("state"), py::arg("X"), py::arg("y"), py::arg("batch"),
          py::arg("hyper"), py::arg("rate"));
  mod.def("tsvgp_marginals", &tsvgp_marginals, py::arg("state"), py::arg("kernel"), py::arg("Xstar"));
  mod.def("tsvgp_elbo", &tsvgp_elbo, py::arg("state"), py::arg("X"), py::arg("y"), py::arg("hyper"));
  mod.def("tsvgp_kl", &tsvgp_kl, py::arg("state"), py::arg("kernel"));
  mod.def("tsvgp_mstep_objective", &tsvgp_mstep_objective, py::arg("state"), py::arg("X"), py::arg("y"),
          py::arg("hyper"));

  mod.def("gen_sinc_classification", [](Eigen::Index n, std::uint64_t seed, bool standardized) {
        Dataset d = gen_sinc_classification(n, seed);
        if (standardized) standardize(d);
        return py::make_tuple(d.X, d.y);
      },
      py::arg("n"), py::arg("seed"), py::arg("standardized") = true,
      "Returns (X, y) for the 1-D sinc classification problem.");

  mod.def("fit",
          [](const MatrixXd& X, const VectorXd& y, const Hyperparams& hyper, std::optional<MatrixXd> Z,
             const std::string& model, const std::string& objective, int outer_iters, int e_steps, int m_steps,
             double e_rate, double m_rate, std::optional<Eigen::Index> batch_size, std::uint64_t seed) {
            TrainConfig cfg;
            cfg.model = parse_model_kind(model);
            cfg.objective = parse_objective(objective);
            cfg.outer_iters = outer_iters;
            cfg.e_steps = e_steps;
            cfg.m_steps = m_steps;
            cfg.e_rate = e_rate;
            cfg.m_rate = m_rate;
            cfg.batch_size = batch_size;
            cfg.seed = seed;
            std::optional<InducingInputs> inducing;
            if (Z) inducing.emplace(*Z);
            const FitResult r = run_em({X, y, MatrixXd(0, X.cols()), VectorXd(0)}, hyper, inducing, cfg);
            return py::make_tuple(r.hyper, trace_to_dict(r.trace));
          },
          py::arg("X"), py::arg("y"), py::arg("hyper"), py::arg("Z") = py::none(), py::arg("model") = "tsvgp",
          py::arg("objective") = "proposed", py::arg("outer_iters") = 20, py::arg("e_steps") = 4,
          py::arg("m_steps") = 1, py::arg("e_rate") = 0.7, py::arg("m_rate") = 0.2,
          py::arg("batch_size") = py::none(), py::arg("seed") = 0,
          "Runs EM and returns (fitted hyperparameters, trace dict).");
}
