"""Density of a mean-of-local-estimates estimator by n-fold self-convolution.

For ``H(X) = mean(h(x_i))`` with strictly monotone ``h``:

1. push the data density through ``h`` (change of variables),
2. convolve the result with itself ``n`` times (density of the sum),
3. rescale to the mean: ``f_H(b) = n * f_sum(n * b)``.

The factor ``n`` in step 3 is the Jacobian of ``b -> n * b``; without it
the result would not integrate to one.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "DensityGrid",
    "IDENTITY",
    "InvalidMapError",
    "LocalEstimateMap",
    "ResolutionError",
    "binned_l1",
    "estimator_density",
    "pushforward",
    "self_convolve",
]

MIN_NODES_PER_SUPPORT = 64


class InvalidMapError(ValueError):
    pass


class ResolutionError(ValueError):
    pass


@dataclass
class DensityGrid:
    """Density values at the nodes ``lo, lo + step, ..., hi``."""

    lo: float
    step: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not self.step > 0:
            raise ValueError("grid step must be positive")
        if self.values.ndim != 1 or self.values.size < 2:
            raise ValueError("grid needs at least two nodes")
        if np.any(self.values < 0):
            raise ValueError("density values must be nonnegative")

    @classmethod
    def from_function(cls, f: Callable, lo: float, hi: float, num: int) -> DensityGrid:
        nodes = np.linspace(lo, hi, num)
        return cls(lo, nodes[1] - nodes[0], np.asarray(f(nodes), dtype=float)).normalized()

    @property
    def hi(self) -> float:
        return self.lo + self.step * (self.values.size - 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.lo + self.step * np.arange(self.values.size)

    def integral(self) -> float:
        v = self.values
        return float(self.step * (v.sum() - 0.5 * (v[0] + v[-1])))

    def normalized(self) -> DensityGrid:
        mass = self.integral()
        if not mass > 0:
            raise ValueError("density has no mass on the grid")
        return DensityGrid(self.lo, self.step, self.values / mass)

    def _trapz(self, g) -> float:
        w = self.values * g
        return float(self.step * (w.sum() - 0.5 * (w[0] + w[-1])))

    def mean(self) -> float:
        return self._trapz(self.nodes) / self.integral()

    def variance(self) -> float:
        mu = self.mean()
        return self._trapz((self.nodes - mu) ** 2) / self.integral()

    def cdf(self) -> np.ndarray:
        """Cumulative trapezoid integral at each node."""
        v = self.values
        return np.concatenate([[0.0], np.cumsum(0.5 * self.step * (v[1:] + v[:-1]))])

    def __call__(self, x) -> np.ndarray:
        """Piecewise-linear interpolation, zero outside ``[lo, hi]``."""
        return np.interp(x, self.nodes, self.values, left=0.0, right=0.0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node", "density"])
        for x, v in zip(self.nodes, self.values):
            w.writerow([repr(float(x)), repr(float(v))])
        return buf.getvalue()


@dataclass(frozen=True)
class LocalEstimateMap:
    """Per-point estimate ``h`` with its inverse (both vectorized)."""

    h: Callable[[np.ndarray], np.ndarray]
    h_inverse: Callable[[np.ndarray], np.ndarray]
    inverse_derivative: Callable[[np.ndarray], np.ndarray] | None = None

    @classmethod
    def affine(cls, scale: float, shift: float = 0.0) -> LocalEstimateMap:
        if scale == 0:
            raise InvalidMapError("affine map needs a nonzero scale")
        return cls(
            lambda x: scale * np.asarray(x) + shift,
            lambda b: (np.asarray(b) - shift) / scale,
            lambda b: np.full(np.shape(b), 1.0 / scale),
        )


IDENTITY = LocalEstimateMap.affine(1.0)


def pushforward(f: DensityGrid, hmap: LocalEstimateMap) -> DensityGrid:
    """Density of ``h(x)`` for ``x ~ f`` on a grid with the same node count."""
    hx = np.asarray(hmap.h(f.nodes), dtype=float)
    d = np.diff(hx)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise InvalidMapError("h must be strictly monotone on the support of f")
    lo, hi = float(min(hx[0], hx[-1])), float(max(hx[0], hx[-1]))
    b = np.linspace(lo, hi, f.values.size)
    xb = np.asarray(hmap.h_inverse(b), dtype=float)
    if not np.allclose(hmap.h(xb), b, rtol=0.0, atol=1e-9 * max(1.0, abs(lo), abs(hi))):
        raise InvalidMapError("h_inverse is not the inverse of h on the grid range")
    if hmap.inverse_derivative is not None:
        jac = np.abs(np.asarray(hmap.inverse_derivative(b), dtype=float))
    else:
        jac = np.abs(np.gradient(xb, b))
    vals = f(np.clip(xb, f.lo, f.hi)) * jac
    return DensityGrid(lo, b[1] - b[0], vals).normalized()


def _trapezoid_convolve(a: np.ndarray, b: np.ndarray, step: float) -> np.ndarray:
    """``(a * b)(x_m)`` by the trapezoid rule over each overlap interval."""
    full = np.convolve(a, b)
    m = np.arange(full.size)
    jlo = np.maximum(0, m - (b.size - 1))
    jhi = np.minimum(m, a.size - 1)
    ends = 0.5 * (a[jlo] * b[m - jlo] + a[jhi] * b[m - jhi])
    return np.maximum(step * (full - ends), 0.0)


def _check_resolution(f: DensityGrid):
    if f.step > (f.hi - f.lo) / MIN_NODES_PER_SUPPORT + 1e-15 * abs(f.hi - f.lo):
        raise ResolutionError(
            f"grid too coarse: step {f.step} > (hi - lo) / {MIN_NODES_PER_SUPPORT}"
        )


def self_convolve(f: DensityGrid, n: int) -> DensityGrid:
    """Density of the sum of ``n`` i.i.d. draws from ``f``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    _check_resolution(f)
    if n == 1:
        return DensityGrid(f.lo, f.step, f.values.copy())
    base = f.normalized()
    acc = base
    for k in range(2, n + 1):
        vals = _trapezoid_convolve(acc.values, base.values, f.step)
        acc = DensityGrid(k * f.lo, f.step, vals).normalized()
    return acc


def estimator_density(f_x: DensityGrid, hmap: LocalEstimateMap, n: int) -> DensityGrid:
    """Density of ``mean(h(x_1), ..., h(x_n))`` with ``x_i ~ f_x``."""
    summed = self_convolve(pushforward(f_x, hmap), n)
    return DensityGrid(summed.lo / n, summed.step / n, n * summed.values).normalized()


def binned_l1(grid: DensityGrid, samples, bins: int = 100) -> float:
    """L1 distance between grid and sample masses over ``bins`` equal bins on ``[lo, hi]``.

    Samples outside the grid count fully against it.
    """
    s = np.asarray(samples, dtype=float).ravel()
    edges = np.linspace(grid.lo, grid.hi, bins + 1)
    counts, _ = np.histogram(s, bins=edges)
    cdf = grid.cdf() / grid.integral()
    mass = np.diff(np.interp(edges, grid.nodes, cdf))
    outside = 1.0 - counts.sum() / s.size
    return float(np.abs(mass - counts / s.size).sum() + outside)
