import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ple_lab import (
    SeededRng,
    analytic_bias,
    get_estimator,
    mle_gaussian,
    mle_uniform,
    monte_carlo_bias,
    ple_gaussian,
    ple_uniform_linear,
    ple_uniform_max,
)
from ple_lab.estimators import DataDomainError, InsufficientDataError

data_lists = st.lists(st.floats(0.0, 10.0), min_size=2, max_size=30)


def test_small_examples():
    x = [0.2, 0.9, 0.5]
    assert mle_uniform(x)[0] == 0.9
    assert np.isclose(ple_uniform_linear(x)[0], 2 * 1.6 / 3)
    assert np.isclose(ple_uniform_max(x)[0], 0.9 * 4 / 3)
    mu, v = mle_gaussian([1.0, 3.0])
    assert (mu, v) == (2.0, 1.0)
    assert np.isclose(ple_gaussian([1.0, 3.0])[1], 2.0)


def test_degenerate_inputs():
    with pytest.raises(InsufficientDataError):
        mle_uniform([])
    with pytest.raises(InsufficientDataError):
        ple_gaussian([1.0])
    with pytest.raises(DataDomainError):
        mle_uniform([-0.1, 0.4])


@pytest.mark.parametrize("n", [1, 2, 5, 20])
def test_uniform_mle_bias_matches_order_statistics(n):
    # max of n U[0,1] is Beta(n, 1); its mean gives the bias oracle
    oracle = stats.beta(n, 1).mean() - 1.0
    assert np.isclose(analytic_bias("mle_uniform", "uniform", [1.0], n)[0], oracle)


def test_gaussian_mle_bias_oracle():
    # E[S^2_mle] = sigma^2 (n-1)/n, from chi-square with n-1 dof
    n, var = 7, 2.5
    oracle = var * stats.chi2(n - 1).mean() / n - var
    assert np.isclose(analytic_bias("mle_gaussian", "gaussian", [0.0, var], n)[1], oracle)


@pytest.mark.parametrize(
    "name, family, params, n",
    [
        ("mle", "uniform", [1.0], 20),
        ("ple-linear", "uniform", [1.0], 5),
        ("ple-max", "uniform", [3.0], 2),
        ("mle", "gaussian", [1.0, 2.0], 5),
        ("ple", "gaussian", [1.0, 2.0], 2),
    ],
)
def test_monte_carlo_agrees_with_analytic_bias(name, family, params, n):
    rep = monte_carlo_bias(get_estimator(name, family), family, params, n, 40_000, SeededRng(3, 9))
    assert rep.agrees(4.0).all(), (rep.mc_bias, rep.analytic_bias, rep.mc_stderr)


def test_mle_uniform_bias_detected():
    rep = monte_carlo_bias("mle_uniform", "uniform", [1.0], 20, 40_000, SeededRng(4, 0))
    assert rep.mc_bias[0] < -10 * rep.mc_stderr[0]


@settings(max_examples=60, deadline=None)
@given(data=data_lists, perm_seed=st.integers(0, 1000))
def test_estimators_are_permutation_invariant(data, perm_seed):
    x = np.array(data)
    y = np.random.default_rng(perm_seed).permutation(x)
    for f in (mle_uniform, ple_uniform_linear, ple_uniform_max, mle_gaussian, ple_gaussian):
        assert np.array_equal(f(x), f(y))


@settings(max_examples=60, deadline=None)
@given(data=data_lists, c=st.floats(0.1, 10.0))
def test_uniform_estimators_scale_with_data(data, c):
    x = np.array(data)
    for f in (mle_uniform, ple_uniform_linear, ple_uniform_max):
        np.testing.assert_allclose(f(c * x), c * f(x), rtol=1e-12, atol=1e-300)


def test_vectorized_rows_match_single_calls(rng):
    from ple_lab import sample

    x = sample("gaussian", [0, 1], (4, 6), rng)
    batch = ple_gaussian(x)
    for i in range(4):
        np.testing.assert_array_equal(batch[i], ple_gaussian(x[i]))


def test_unknown_estimator():
    with pytest.raises(KeyError):
        get_estimator("median", "uniform")
