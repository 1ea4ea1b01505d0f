from math import comb, factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ple_lab import DensityGrid, LocalEstimateMap, SeededRng, binned_l1, estimator_density, pushforward, sample
from ple_lab.density import IDENTITY, InvalidMapError, ResolutionError, self_convolve


def irwin_hall_pdf(x, n):
    """Density of the sum of n U[0,1] variables (alternating-sum closed form)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for k in range(n + 1):
        out += (-1) ** k * comb(n, k) * np.where(x > k, (x - k) ** (n - 1), 0.0)
    return np.where((x >= 0) & (x <= n), out / factorial(n - 1), 0.0)


def unit_uniform(nodes=513):
    return DensityGrid.from_function(lambda x: np.ones_like(x), 0.0, 1.0, nodes)


def std_normal(nodes=2049):
    return DensityGrid.from_function(stats.norm.pdf, -10.0, 10.0, nodes)


class TestPushforward:
    def test_doubling_halves_height(self):
        g = pushforward(unit_uniform(), LocalEstimateMap.affine(2.0))
        assert np.isclose(g.lo, 0.0) and np.isclose(g.hi, 2.0)
        np.testing.assert_allclose(g.values, 0.5, rtol=1e-12)

    def test_identity(self):
        f = std_normal()
        g = pushforward(f, IDENTITY)
        np.testing.assert_allclose(g.values, f.values, atol=1e-12)

    def test_shifted_normal(self):
        g = pushforward(std_normal(), LocalEstimateMap.affine(1.0, 3.0))
        np.testing.assert_allclose(g.values, stats.norm.pdf(g.nodes, 3.0, 1.0), atol=1e-6)

    def test_nonlinear_map_uses_numeric_jacobian(self):
        # x -> x**2 on U[0,1] gives density 1 / (2 sqrt(b)); compare away from the singularity
        h = LocalEstimateMap(np.square, np.sqrt)
        g = pushforward(unit_uniform(4097), h)
        mid = (g.nodes > 0.1) & (g.nodes < 0.9)
        np.testing.assert_allclose(g.values[mid], 0.5 / np.sqrt(g.nodes[mid]), rtol=5e-3)

    def test_non_monotone_map(self):
        f = DensityGrid.from_function(lambda x: np.ones_like(x), -1.0, 1.0, 129)
        with pytest.raises(InvalidMapError):
            pushforward(f, LocalEstimateMap(np.square, np.sqrt))

    def test_wrong_inverse(self):
        with pytest.raises(InvalidMapError):
            pushforward(unit_uniform(), LocalEstimateMap(lambda x: 2 * x, lambda b: b))


class TestSelfConvolve:
    def test_n1_is_unchanged(self):
        f = std_normal()
        np.testing.assert_allclose(self_convolve(f, 1).values, f.values, atol=1e-12)

    def test_irwin_hall_n2(self):
        g = self_convolve(unit_uniform(), 2)
        assert np.isclose(g.lo, 0.0) and np.isclose(g.hi, 2.0)
        assert np.max(np.abs(g.values - irwin_hall_pdf(g.nodes, 2))) < 1e-3
        assert np.isclose(g(1.0), 1.0, atol=1e-3)

    def test_gaussian_n4(self):
        g = self_convolve(std_normal(), 4)
        assert np.max(np.abs(g.values - stats.norm.pdf(g.nodes, 0.0, 2.0))) < 1e-4

    def test_too_coarse(self):
        with pytest.raises(ResolutionError):
            self_convolve(unit_uniform(33), 3)


class TestEstimatorDensity:
    def test_linear_uniform_ple_is_centered(self):
        g = estimator_density(unit_uniform(), LocalEstimateMap.affine(2.0), 20)
        assert abs(g.mean() - 1.0) < 0.005

    def test_n1_identity_returns_input(self):
        f = std_normal()
        np.testing.assert_allclose(estimator_density(f, IDENTITY, 1).values, f.values, atol=1e-12)

    def test_matches_monte_carlo(self):
        n = 5
        g = estimator_density(unit_uniform(), LocalEstimateMap.affine(2.0), n)
        est = 2.0 * sample("uniform", [1.0], (1_000_000, n), SeededRng(8)).mean(axis=1)
        assert binned_l1(g, est, 100) < 0.02

    @pytest.mark.parametrize("n", [2, 5, 12, 32])
    def test_mean_and_variance_compose(self, n):
        f = unit_uniform()
        g = estimator_density(f, LocalEstimateMap.affine(2.0), n)
        # E[2x] = 1, Var[2x] = 1/3
        assert abs(g.mean() - 1.0) < 2 * g.step
        assert abs(g.variance() - (1 / 3) / n) < 0.05 * (1 / 3) / n

    def test_clt_shape(self):
        n = 32
        g = estimator_density(unit_uniform(), IDENTITY, n)
        cdf = g.cdf() / g.integral()
        ref = stats.norm.cdf(g.nodes, 0.5, np.sqrt(1 / 12 / n))
        assert np.max(np.abs(cdf - ref)) < 0.01

    def test_csv(self):
        text = self_convolve(unit_uniform(65), 2).to_csv()
        lines = text.splitlines()
        assert lines[0] == "node,density" and len(lines) == 130


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(1, 8),
    scale=st.floats(0.2, 5.0),
    shift=st.floats(-3.0, 3.0),
    skew=st.floats(0.0, 3.0),
)
def test_mass_is_conserved(n, scale, shift, skew):
    f = DensityGrid.from_function(lambda x: 1.0 + skew * x, 0.0, 1.0, 129)
    g = estimator_density(f, LocalEstimateMap.affine(scale, shift), n)
    assert abs(g.integral() - 1.0) < 1e-6
    assert np.all(g.values >= 0)


def test_grid_validation():
    with pytest.raises(ValueError):
        DensityGrid(0.0, 0.0, [1.0, 1.0])
    with pytest.raises(ValueError):
        DensityGrid(0.0, 0.1, [1.0, -1.0])
