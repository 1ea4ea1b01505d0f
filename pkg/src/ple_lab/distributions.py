"""Univariate parametric families with seeded inverse-CDF sampling.

Parameters are plain float arrays whose last axis follows the family's
``param_names`` layout, so a batch of parameter vectors (one per trial)
broadcasts against a batch of datasets.  Sampling always goes through a
bank of open-interval uniforms; re-transforming the same bank under other
parameters gives common random numbers for free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "FAMILIES",
    "Family",
    "ParameterDomainError",
    "SeededRng",
    "get_family",
    "log_likelihood",
    "logpdf",
    "pdf",
    "sample",
]

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_LOG_2PI = math.log(2.0 * math.pi)


class ParameterDomainError(ValueError):
    """Parameter vector outside the family's domain."""


@dataclass(frozen=True)
class SeededRng:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    Every call to :meth:`generator` returns a fresh PCG64 generator at the
    start of the stream, so handing the same ``SeededRng`` to two functions
    makes them see identical draws.
    """

    seed: int = 0
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=self.seed & _MASK64, spawn_key=(self.stream_id & _MASK64,)
        )
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, index: int) -> SeededRng:
        """Independent sub-stream, e.g. one per (trial, generation)."""
        sid = (self.stream_id * _GOLDEN + int(index) + 1) & _MASK64
        return SeededRng(self.seed, sid)


def open_uniforms(gen: np.random.Generator, shape) -> np.ndarray:
    """Uniform draws on the open interval (0, 1), safe for ``ndtri``."""
    k = gen.integers(0, 1 << 53, size=shape, dtype=np.int64)
    return (k + 0.5) * 2.0**-53


@dataclass(frozen=True)
class Family:
    """Registry entry: tag, parameter layout, and open domain bounds.

    ``bounds[i]`` is ``(lower, upper, closed)``; ``closed`` admits the
    endpoints (used for mixture weights, where 0 and 1 are legal).
    """

    tag: str
    param_names: tuple[str, ...]
    bounds: tuple[tuple[float, float, bool], ...]
    n_banks: int = 1

    @property
    def param_count(self) -> int:
        return len(self.param_names)

    def check(self, params) -> np.ndarray:
        p = np.asarray(params, dtype=float)
        if p.ndim == 0 or p.shape[-1] != self.param_count:
            raise ParameterDomainError(
                f"{self.tag} expects {self.param_count} parameters, got shape {p.shape}"
            )
        if not np.all(np.isfinite(p)):
            raise ParameterDomainError(f"{self.tag}: non-finite parameters")
        for i, (lo, hi, closed) in enumerate(self.bounds):
            v = p[..., i]
            ok = (v >= lo) & (v <= hi) if closed else (v > lo) & (v < hi)
            if not np.all(ok):
                raise ParameterDomainError(
                    f"{self.tag}: {self.param_names[i]} outside "
                    f"{'[' if closed else '('}{lo}, {hi}{']' if closed else ')'}"
                )
        return p

    def in_domain(self, params) -> np.ndarray:
        """Elementwise domain mask over the batch axes (no exception)."""
        p = np.asarray(params, dtype=float)
        ok = np.all(np.isfinite(p), axis=-1)
        for i, (lo, hi, closed) in enumerate(self.bounds):
            v = p[..., i]
            with np.errstate(invalid="ignore"):
                ok &= (v >= lo) & (v <= hi) if closed else (v > lo) & (v < hi)
        return ok

    def uniforms(self, gen: np.random.Generator, shape) -> np.ndarray:
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        return open_uniforms(gen, (self.n_banks, *shape))

    def transform(self, params, banks) -> np.ndarray:
        """Map uniform banks to draws; ``params`` broadcasts over batch axes."""
        raise NotImplementedError

    def logpdf(self, params, x) -> np.ndarray:
        raise NotImplementedError


def _col(p, i):
    return p[..., i, None]


class _OneSidedUniform(Family):
    def transform(self, params, banks):
        return _col(params, 0) * banks[0]

    def logpdf(self, params, x):
        a = _col(params, 0)
        inside = (x >= 0.0) & (x <= a)
        return np.where(inside, -np.log(a), -np.inf)


class _Gaussian(Family):
    def transform(self, params, banks):
        return _col(params, 0) + np.sqrt(_col(params, 1)) * special.ndtri(banks[0])

    def logpdf(self, params, x):
        mu, var = _col(params, 0), _col(params, 1)
        return -0.5 * (_LOG_2PI + np.log(var)) - (x - mu) ** 2 / (2.0 * var)


class _Exponential(Family):
    def transform(self, params, banks):
        return -np.log1p(-banks[0]) / _col(params, 0)

    def logpdf(self, params, x):
        rate = _col(params, 0)
        return np.where(x >= 0.0, np.log(rate) - rate * x, -np.inf)


class _Bernoulli(Family):
    def transform(self, params, banks):
        return (banks[0] < _col(params, 0)).astype(float)

    def logpdf(self, params, x):
        p = _col(params, 0)
        with np.errstate(divide="ignore"):
            out = np.where(x == 1.0, np.log(p), np.log1p(-p))
        return np.where((x == 0.0) | (x == 1.0), out, -np.inf)


class _Gmm2(Family):
    # layout (mu1, mu2, var1, var2, w1); w2 = 1 - w1
    def transform(self, params, banks):
        first = banks[0] < _col(params, 4)
        z = special.ndtri(banks[1])
        y1 = _col(params, 0) + np.sqrt(_col(params, 2)) * z
        y2 = _col(params, 1) + np.sqrt(_col(params, 3)) * z
        return np.where(first, y1, y2)

    def logpdf(self, params, x):
        w1 = _col(params, 4)
        l1 = -0.5 * (_LOG_2PI + np.log(_col(params, 2))) - (x - _col(params, 0)) ** 2 / (
            2.0 * _col(params, 2)
        )
        l2 = -0.5 * (_LOG_2PI + np.log(_col(params, 3))) - (x - _col(params, 1)) ** 2 / (
            2.0 * _col(params, 3)
        )
        with np.errstate(divide="ignore"):
            return np.logaddexp(np.log(w1) + l1, np.log1p(-w1) + l2)


_INF = math.inf

FAMILIES: dict[str, Family] = {
    "one_sided_uniform": _OneSidedUniform(
        "one_sided_uniform", ("a",), ((0.0, _INF, False),)
    ),
    "gaussian": _Gaussian(
        "gaussian", ("mu", "var"), ((-_INF, _INF, False), (0.0, _INF, False))
    ),
    "exponential": _Exponential("exponential", ("rate",), ((0.0, _INF, False),)),
    "bernoulli": _Bernoulli("bernoulli", ("p",), ((0.0, 1.0, True),)),
    "gmm2": _Gmm2(
        "gmm2",
        ("mu1", "mu2", "var1", "var2", "w1"),
        (
            (-_INF, _INF, False),
            (-_INF, _INF, False),
            (0.0, _INF, False),
            (0.0, _INF, False),
            (0.0, 1.0, True),
        ),
        n_banks=2,
    ),
}

_ALIASES = {"uniform": "one_sided_uniform", "normal": "gaussian", "gmm": "gmm2"}


def get_family(family: str | Family) -> Family:
    if isinstance(family, Family):
        return family
    tag = _ALIASES.get(family, family)
    try:
        return FAMILIES[tag]
    except KeyError:
        raise KeyError(f"unknown family {family!r}; known: {sorted(FAMILIES)}") from None


def sample(family, params, n, rng: SeededRng) -> np.ndarray:
    """Draw i.i.d. points; ``n`` may be an int or a batch shape like ``(trials, n)``.

    With batched ``params`` of shape ``(T, p)``, pass ``n=(T, n)`` and row
    ``t`` is drawn under ``params[t]``.
    """
    fam = get_family(family)
    p = fam.check(params)
    shape = (n,) if np.isscalar(n) else tuple(n)
    if shape[-1] < 1:
        raise ValueError("sample size must be >= 1")
    return fam.transform(p, fam.uniforms(rng.generator(), shape))


def logpdf(family, params, x) -> np.ndarray:
    fam = get_family(family)
    p = fam.check(params)
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    out = fam.logpdf(p, np.atleast_1d(x))
    return out[..., 0] if scalar else out


def pdf(family, params, x) -> np.ndarray:
    return np.exp(logpdf(family, params, x))


def log_likelihood(family, params, data) -> np.ndarray:
    """Sum of pointwise log-densities along the last axis; may be ``-inf``."""
    x = np.asarray(data, dtype=float)
    if x.ndim == 0 or x.shape[-1] < 1:
        raise ValueError("dataset must contain at least one point")
    return np.sum(logpdf(family, params, x), axis=-1)
