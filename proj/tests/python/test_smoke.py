import math

import numpy as np
import pytest

import dualgp


def regression(n=25, seed=0):
    rng = np.random.default_rng(seed)
    X = np.sort(rng.uniform(-3, 3, n)).reshape(-1, 1)
    y = np.sin(2 * X[:, 0]) + 0.2 * rng.standard_normal(n)
    return X, y


def test_kernel_matrix_matches_numpy():
    X, _ = regression(6)
    k = dualgp.KernelSpec(dualgp.KernelFamily.SquaredExponential, 0.7, 1.3)
    K = dualgp.eval_matrix(k, X, X)
    d2 = (X - X.T) ** 2
    np.testing.assert_allclose(K, 1.3 * np.exp(-0.5 * d2 / 0.49), rtol=1e-12)


def test_conjugate_tvgp_matches_gp_regression():
    X, y = regression()
    noise = 0.1
    hyper = dualgp.Hyperparams(dualgp.KernelSpec(dualgp.KernelFamily.Matern52, 1.0, 1.0),
                               dualgp.LikelihoodSpec.gaussian(noise))
    sites = dualgp.tvgp_estep(dualgp.SiteParams.zeros(len(y)), X, y, hyper, 1.0)
    Xs = np.linspace(-3, 3, 7).reshape(-1, 1)
    got = dualgp.tvgp_predict(sites, hyper.kernel, X, Xs)

    K = dualgp.eval_matrix(hyper.kernel, X, X) + noise * np.eye(len(y))
    Ks = dualgp.eval_matrix(hyper.kernel, Xs, X)
    mean = Ks @ np.linalg.solve(K, y)
    var = dualgp.eval_diag(hyper.kernel, Xs) - np.einsum("ij,ji->i", Ks, np.linalg.solve(K, Ks.T))
    np.testing.assert_allclose(got.mean, mean, atol=1e-8)
    np.testing.assert_allclose(got.var, var, atol=1e-8)

    logml = dualgp.exact_gp_logml(X, y, hyper.kernel, noise)
    assert dualgp.tvgp_logZ(sites, hyper.kernel, X) == pytest.approx(logml, abs=1e-8)


def test_sparse_fit_on_sinc_improves_elbo():
    X, y = dualgp.gen_sinc_classification(100, 1)
    hyper = dualgp.Hyperparams(dualgp.KernelSpec(dualgp.KernelFamily.Matern52, 0.5, 1.0),
                               dualgp.LikelihoodSpec.probit())
    Z = dualgp.grid_inducing(X.min(), X.max(), 10).Z
    fitted, trace = dualgp.fit(X, y, hyper, Z, model="tsvgp", outer_iters=5)
    assert len(trace["elbo"]) == 6
    assert all(math.isfinite(v) for v in trace["elbo"])
    assert trace["elbo"][-1] > trace["elbo"][0]
    assert fitted.kernel.lengthscale > 0


def test_errors_are_translated():
    with pytest.raises(dualgp.InvalidArgument):
        dualgp.LikelihoodSpec.gaussian(0.0)
    with pytest.raises(dualgp.Error):
        dualgp.expectations(dualgp.LikelihoodSpec.probit(), 2.0, 0.0, 1.0)
