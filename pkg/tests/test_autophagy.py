import numpy as np
import pytest

from ple_lab import ConfigurationError, LoopConfig, SeededRng, collapse_rate, get_estimator, run_loop, sample
from ple_lab.autophagy import GenerationTrace

UNIFORM_MLE = LoopConfig("uniform", (1.0,), n=20, generations=10, trials=100, estimator="mle")


def test_uniform_mle_follows_geometric_decay():
    trace = run_loop(UNIFORM_MLE, SeededRng(1))
    g = np.arange(11)
    expected = (20 / 21) ** g
    assert np.all(np.abs(trace.mean() - expected) <= 4 * trace.stderr() + 1e-15)
    assert np.isclose(expected[-1], 0.6139, atol=1e-4)


@pytest.mark.parametrize("estimator", ["ple-max", "ple-linear"])
def test_uniform_ple_stays_at_truth(estimator):
    cfg = LoopConfig("uniform", (1.0,), 20, 10, 100, estimator)
    trace = run_loop(cfg, SeededRng(2))
    assert np.all(np.abs(trace.mean() - 1.0) <= 4 * trace.stderr() + 1e-15)


def test_gaussian_ple_variance_is_a_martingale():
    cfg = LoopConfig("gaussian", (0.0, 1.0), 10, 10, 1000, "ple")
    trace = run_loop(cfg, SeededRng(3))
    assert np.all(np.abs(trace.mean("var") - 1.0) <= 4 * trace.stderr("var") + 1e-15)


def test_mle_chain_never_increases():
    trace = run_loop(UNIFORM_MLE, SeededRng(4))
    assert np.all(np.diff(trace.values(), axis=1) <= 0)


def test_collapse_rates():
    mle = run_loop(UNIFORM_MLE, SeededRng(5))
    assert abs(collapse_rate(mle) - np.log(20 / 21)) < 0.01
    ple = run_loop(LoopConfig("uniform", (1.0,), 20, 10, 100, "ple-max"), SeededRng(5))
    assert abs(collapse_rate(ple)) < 0.005


def test_flat_trace_has_zero_slope():
    trace = GenerationTrace(np.ones((3, 6, 1)), np.zeros(3, bool), ("a",))
    assert collapse_rate(trace) == 0.0


def test_first_generation_matches_direct_sampling():
    r = SeededRng(6)
    trace = run_loop(UNIFORM_MLE, r)
    direct = get_estimator("mle", "uniform")(sample("uniform", [1.0], (100, 20), r))
    np.testing.assert_array_equal(trace.estimates[:, 1], direct)


def test_rows_and_csv_layout():
    cfg = LoopConfig("uniform", (1.0,), 20, 1, 10, "mle")
    text = run_loop(cfg, SeededRng()).to_csv()
    lines = text.splitlines()
    assert lines[0] == "x,y,error" and len(lines) == 3
    assert lines[1] == "0,1.0,0.0"


def test_trace_is_reproducible():
    a = run_loop(UNIFORM_MLE, SeededRng(9)).to_csv()
    b = run_loop(UNIFORM_MLE, SeededRng(9)).to_csv()
    assert a == b


def test_degenerate_chain_is_frozen_and_flagged():
    # n=2 Gaussian MLE variances shrink geometrically; from 1e-300 they underflow to 0
    cfg = LoopConfig("gaussian", (0.0, 1e-300), 2, 60, 50, "mle")
    trace = run_loop(cfg, SeededRng(1))
    v = trace.values("var")
    assert trace.flagged.any()
    for t in np.flatnonzero(trace.flagged):
        hit = np.argmax(v[t] <= 0)
        assert np.all(v[t, hit:] == v[t, hit])


@pytest.mark.parametrize(
    "kw",
    [dict(generations=0), dict(trials=0), dict(estimator="ple", family="uniform", n=0)],
)
def test_bad_configuration(kw):
    base = dict(family="uniform", params=(1.0,), n=20, generations=3, trials=5, estimator="mle")
    base.update(kw)
    with pytest.raises(ConfigurationError):
        run_loop(LoopConfig(**base), SeededRng())


def test_estimator_family_mismatch():
    with pytest.raises(ConfigurationError):
        run_loop(LoopConfig("uniform", (1.0,), 5, 2, 5, "mle_gaussian"), SeededRng())
    with pytest.raises(ConfigurationError):
        run_loop(LoopConfig("gaussian", (0.0, 1.0), 1, 2, 5, "ple"), SeededRng())
