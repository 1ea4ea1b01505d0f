import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from ple_lab import EmConfig, GridSpec, SeededRng, em_fit, fairness_report, kl_divergence, run_grid, sample
from ple_lab import gmm_ple
from ple_lab.gmm_lab import canonical, em_batch, gaussian_kl

TRUTH = np.array([0.0, 2.0, 1.0, 1.0, 0.5])


class TestEm:
    def test_single_gaussian_data(self):
        x = sample("gaussian", [1.0, 2.0], 400, SeededRng(1))
        p = em_fit(x, rng=SeededRng(2)).params
        mix_mean = p[4] * p[0] + (1 - p[4]) * p[1]
        assert abs(mix_mean - x.mean()) < 3 * x.std(ddof=1) / np.sqrt(x.size)

    def test_consistent_at_large_n(self):
        x = sample("gmm2", TRUTH, 10_000, SeededRng(3))
        q = em_fit(x, rng=SeededRng(4)).params
        assert kl_divergence(q, TRUTH, 100_000, SeededRng(5))[0] < 0.01

    def test_log_likelihood_never_decreases(self):
        gen = np.random.default_rng(0)
        for cell in range(100):
            w = gen.uniform(0.5, 0.95)
            n = int(gen.integers(8, 120))
            x = sample("gmm2", [0.0, 2.0, 1.0, 1.0, w], n, SeededRng(cell, 7))
            res = em_fit(x, EmConfig(restarts=2), SeededRng(cell, 8))
            assert np.all(np.diff(res.history) >= -1e-10), cell
            assert res.converged

    def test_collapse_is_floored_and_flagged(self):
        x = np.array([0.0] * 10 + [5.0, 6.0])
        res = em_fit(x, rng=SeededRng(0))
        assert res.floored
        assert min(res.params[2:4]) == pytest.approx(1e-6)

    def test_needs_four_points(self):
        with pytest.raises(ValueError):
            em_fit([0.0, 1.0, 2.0])

    def test_batch_rows_match_single_fits(self):
        x = sample("gmm2", TRUTH, (3, 40), SeededRng(9))
        batch = em_batch(x, rng=SeededRng(10))
        np.testing.assert_array_equal(batch[0], em_fit(x[0], rng=SeededRng(10)).params)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            EmConfig(tol=0.0)
        with pytest.raises(ValueError):
            EmConfig(max_iter=0)


class TestKl:
    def test_self_divergence_is_zero(self):
        est, se = kl_divergence(TRUTH, TRUTH, 10_000, SeededRng())
        assert abs(est) <= 4 * se

    def test_shifted_gaussians(self):
        q = [0.0, 5.0, 1.0, 1.0, 1.0]  # all weight on N(0, 1)
        p = [1.0, 5.0, 1.0, 1.0, 1.0]
        est, se = kl_divergence(q, p, 100_000, SeededRng(1))
        assert abs(est - 0.5) < 4 * se

    def test_gibbs_inequality_up_to_noise(self):
        gen = np.random.default_rng(2)
        for i in range(100):
            def rand():
                return [*gen.normal(0, 2, 2), *gen.uniform(0.2, 3, 2), gen.uniform(0.05, 0.95)]
            est, se = kl_divergence(rand(), rand(), 5_000, SeededRng(i))
            assert est > -4 * se

    def test_deterministic(self):
        q = [0.1, 2.2, 0.8, 1.1, 0.6]
        assert kl_divergence(q, TRUTH, 1000, SeededRng(3)) == kl_divergence(q, TRUTH, 1000, SeededRng(3))

    def test_closed_form_component_kl(self):
        f = lambda x: stats.norm.pdf(x, 0.3, 1.2) * (stats.norm.logpdf(x, 0.3, 1.2) - stats.norm.logpdf(x, -0.5, 0.7))
        ref, _ = integrate.quad(f, -20, 20)
        assert np.isclose(gaussian_kl(0.3, 1.44, -0.5, 0.49), ref, rtol=1e-8)


dyadic = st.integers(1, 63).map(lambda k: k / 64)


@settings(max_examples=40, deadline=None)
@given(
    means=st.lists(st.floats(-3, 3), min_size=2, max_size=2),
    variances=st.lists(st.floats(0.1, 4), min_size=2, max_size=2),
    w=dyadic,
)
def test_label_switching_invariance(means, variances, w):
    q = np.array([*means, *variances, w])
    swapped = np.array([means[1], means[0], variances[1], variances[0], 1 - w])
    assert np.array_equal(canonical(q), canonical(swapped))
    r = SeededRng(4)
    assert kl_divergence(q, TRUTH, 500, r) == kl_divergence(swapped, TRUTH, 500, r)
    assert kl_divergence(TRUTH, q, 500, r) == kl_divergence(TRUTH, swapped, 500, r)
    assert fairness_report(q, TRUTH) == fairness_report(swapped, TRUTH)


class TestFairness:
    truth = np.array([0.0, 2.0, 1.0, 1.0, 0.9])

    def test_exact_fit_is_fair(self):
        rep = fairness_report(self.truth, self.truth)
        assert rep.s_maj == rep.s_min == 1e6
        assert rep.r_fair == 1.0

    def test_twice_as_wrong_minority(self):
        d = 0.2
        fit = [d, 2.0 + np.sqrt(2) * d, 1.0, 1.0, 0.9]  # KL = d^2/2 and d^2
        rep = fairness_report(fit, self.truth)
        assert np.isclose(rep.kl_min, 2 * rep.kl_maj)
        assert np.isclose(rep.r_fair, 2.0)

    def test_majority_follows_true_weight(self):
        truth = np.array([0.0, 2.0, 1.0, 1.0, 0.1])
        fit = [0.3, 2.0, 1.0, 1.0, 0.1]
        rep = fairness_report(fit, truth)
        assert rep.kl_maj == 0.0 and rep.s_maj == 1e6
        assert np.isclose(rep.kl_min, 0.045)

    def test_scores_positive(self):
        rep = fairness_report([5.0, -3.0, 0.01, 9.0, 0.5], self.truth)
        assert rep.s_maj > 0 and rep.s_min > 0 and rep.r_fair > 0


SMALL = GridSpec(weights=(0.9,), sizes=(20,), seeds=3, kl_samples=2000)
FAST_TRAIN = {"train": {"steps": 20, "batch": 2}}


class TestGrid:
    def test_rerun_gives_identical_csv(self):
        a = run_grid(GridSpec(weights=(0.9,), sizes=(30,), seeds=1, kl_samples=1000), **FAST_TRAIN).to_csv()
        b = run_grid(GridSpec(weights=(0.9,), sizes=(30,), seeds=1, kl_samples=1000), **FAST_TRAIN).to_csv()
        assert a == b
        assert a.splitlines()[0] == "weight,n,kl_mle_mean,kl_ple_mean,d_mean,d_stderr,rfair_mle,rfair_ple"

    def test_cells_do_not_depend_on_grid_shape(self):
        one = run_grid(SMALL, **FAST_TRAIN).cells[0]
        two = run_grid(GridSpec((0.6, 0.9), (20,), 3, 2000), workers=2, **FAST_TRAIN).cell(0.9, 20)
        assert np.array_equal(one.kl_mle, two.kl_mle) and np.array_equal(one.kl_ple, two.kl_ple)

    def test_paired_stderr(self):
        c = run_grid(SMALL, **FAST_TRAIN).cells[0]
        d = c.kl_mle - c.kl_ple
        assert np.isclose(c.d_stderr(), d.std(ddof=1) / np.sqrt(d.size))

    def test_kl_values_not_meaningfully_negative(self):
        c = run_grid(SMALL, **FAST_TRAIN).cells[0]
        assert np.all(c.kl_mle > -0.01) and np.all(c.kl_ple > -0.01)

    def test_fit_failures_are_recorded(self, monkeypatch):
        real = gmm_ple.make_fitter

        def flaky(method, truth, n, rng, **kw):
            inner = real(method, truth, n, rng, **kw)
            calls = []

            def fit(x, r):
                calls.append(1)
                if len(calls) == 2:
                    raise FloatingPointError("boom")
                return inner(x, r)

            return fit

        monkeypatch.setattr(gmm_ple, "make_fitter", flaky)
        c = run_grid(SMALL, **FAST_TRAIN).cells[0]
        assert len(c.failures) == 1 and "boom" in c.failures[0]
        assert np.isnan(c.kl_ple[1]) and np.isfinite(c.row()["d_mean"])

    def test_solver_method_runs(self):
        c = run_grid(GridSpec((0.7,), (30,), 2, 2000), "solver").cells[0]
        assert np.all(np.isfinite(c.kl_ple)) and not c.failures

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            gmm_ple.make_fitter("bogus", TRUTH, 10, SeededRng())

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            GridSpec(weights=(1.0,))
        with pytest.raises(ValueError):
            GridSpec(seeds=0)


def test_variance_scale_solver_is_near_one_at_large_n():
    x = sample("gmm2", TRUTH, 2000, SeededRng(11))
    _, c = gmm_ple.fit_variance_scale(x, gmm_ple.GmmPenaltyConfig(k=4), SeededRng(12))
    assert abs(c - 1.0) < 0.02


@pytest.mark.slow
def test_balanced_difference_shrinks_with_n(grid_cell):
    cells = [grid_cell(0.5, n) for n in (50, 500, 5000)]
    mags = [np.abs(c.d).mean() for c in cells]
    ses = [np.abs(c.d).std(ddof=1) / np.sqrt(c.d.size) for c in cells]
    for i in range(2):
        assert mags[i + 1] <= mags[i] + 2 * np.hypot(ses[i], ses[i + 1]), (mags, ses)
