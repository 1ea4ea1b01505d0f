"""Closed-form MLE/PLE estimators for the one-sided uniform and the Gaussian.

Every estimator maps data along the last axis to a parameter vector, so a
``(trials, n)`` block is estimated in one call.  Data are sorted before any
reduction; that makes the outputs bitwise permutation invariant (pairwise
summation in numpy is otherwise order dependent).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .distributions import SeededRng, get_family, sample

__all__ = [
    "BiasReport",
    "DataDomainError",
    "ESTIMATORS",
    "EstimatorFn",
    "InsufficientDataError",
    "analytic_bias",
    "get_estimator",
    "mle_gaussian",
    "mle_uniform",
    "monte_carlo_bias",
    "ple_gaussian",
    "ple_uniform_linear",
    "ple_uniform_max",
]


class DataDomainError(ValueError):
    """Data point outside the support the estimator assumes."""


class InsufficientDataError(ValueError):
    pass


def _prepare(data) -> np.ndarray:
    x = np.asarray(data, dtype=float)
    if x.ndim == 0 or x.shape[-1] < 1:
        raise InsufficientDataError("dataset must contain at least one point")
    if not np.all(np.isfinite(x)):
        raise ValueError("dataset contains non-finite points")
    return np.sort(x, axis=-1)


def _nonnegative(x: np.ndarray) -> np.ndarray:
    if np.any(x[..., 0] < 0.0):
        raise DataDomainError("one-sided uniform data must be nonnegative")
    return x


def mle_uniform(data) -> np.ndarray:
    """Largest observation, the MLE of ``a`` in U[0, a]."""
    x = _nonnegative(_prepare(data))
    return x[..., -1:].copy()


def ple_uniform_linear(data) -> np.ndarray:
    """Twice the sample mean (shared-coefficient linear PLE)."""
    x = _prepare(data)
    return 2.0 * np.mean(x, axis=-1, keepdims=True)


def ple_uniform_max(data) -> np.ndarray:
    """``(n + 1) / n`` times the maximum."""
    x = _nonnegative(_prepare(data))
    n = x.shape[-1]
    return ((n + 1) / n) * x[..., -1:]


def _mean_and_mle_var(data):
    x = _prepare(data)
    n = x.shape[-1]
    if n < 2:
        raise InsufficientDataError("Gaussian estimation needs n >= 2")
    mu = np.mean(x, axis=-1, keepdims=True)
    d = x - mu
    var = np.sum(d * d, axis=-1, keepdims=True) / n
    return mu, var, n


def mle_gaussian(data) -> np.ndarray:
    """(sample mean, 1/n variance)."""
    mu, var, _ = _mean_and_mle_var(data)
    return np.concatenate([mu, var], axis=-1)


def ple_gaussian(data) -> np.ndarray:
    """(sample mean, 1/(n-1) variance), computed as the MLE variance times n/(n-1)."""
    mu, var, n = _mean_and_mle_var(data)
    return np.concatenate([mu, var * (n / (n - 1))], axis=-1)


@dataclass(frozen=True)
class EstimatorFn:
    name: str
    family_tag: str
    apply: Callable[[np.ndarray], np.ndarray]
    min_n: int = 1

    def __call__(self, data) -> np.ndarray:
        return self.apply(data)


ESTIMATORS: dict[str, EstimatorFn] = {
    "mle_uniform": EstimatorFn("mle_uniform", "one_sided_uniform", mle_uniform),
    "ple_uniform_linear": EstimatorFn(
        "ple_uniform_linear", "one_sided_uniform", ple_uniform_linear
    ),
    "ple_uniform_max": EstimatorFn("ple_uniform_max", "one_sided_uniform", ple_uniform_max),
    "mle_gaussian": EstimatorFn("mle_gaussian", "gaussian", mle_gaussian, min_n=2),
    "ple_gaussian": EstimatorFn("ple_gaussian", "gaussian", ple_gaussian, min_n=2),
}

# short names used on the command line
_ALIASES = {
    ("one_sided_uniform", "mle"): "mle_uniform",
    ("one_sided_uniform", "ple-linear"): "ple_uniform_linear",
    ("one_sided_uniform", "ple-max"): "ple_uniform_max",
    ("one_sided_uniform", "ple"): "ple_uniform_max",
    ("gaussian", "mle"): "mle_gaussian",
    ("gaussian", "ple"): "ple_gaussian",
}


def get_estimator(name: str | EstimatorFn, family=None) -> EstimatorFn:
    if isinstance(name, EstimatorFn):
        return name
    if family is not None:
        key = (get_family(family).tag, name)
        name = _ALIASES.get(key, name)
    try:
        return ESTIMATORS[name]
    except KeyError:
        raise KeyError(f"unknown estimator {name!r}; known: {sorted(ESTIMATORS)}") from None


def analytic_bias(estimator, family, params, n: int):
    """Closed-form bias ``E[theta_hat] - theta`` per parameter, or ``None``."""
    est = get_estimator(estimator)
    fam = get_family(family)
    p = fam.check(params)
    if est.family_tag != fam.tag:
        return None
    if est.name == "mle_uniform":
        return np.array([-p[0] / (n + 1)])
    if est.name in ("ple_uniform_linear", "ple_uniform_max", "ple_gaussian"):
        return np.zeros(fam.param_count)
    if est.name == "mle_gaussian":
        return np.array([0.0, -p[1] / n])
    return None


@dataclass
class BiasReport:
    estimator: str
    true_params: np.ndarray
    analytic_bias: np.ndarray | None
    mc_bias: np.ndarray
    mc_stderr: np.ndarray
    trials: int

    def agrees(self, k: float = 4.0) -> np.ndarray | None:
        """Per-parameter agreement of MC and analytic bias within ``k`` stderr."""
        if self.analytic_bias is None:
            return None
        return np.abs(self.mc_bias - self.analytic_bias) < k * self.mc_stderr


def monte_carlo_bias(estimator, family, params, n: int, trials: int, rng: SeededRng) -> BiasReport:
    if trials < 2:
        raise ValueError("need at least two trials for a standard error")
    est = get_estimator(estimator, family)
    fam = get_family(family)
    p = fam.check(params)
    x = sample(fam, p, (trials, n), rng)
    theta = est(x)
    mean = theta.mean(axis=0)
    stderr = theta.std(axis=0, ddof=1) / np.sqrt(trials)
    return BiasReport(
        estimator=est.name,
        true_params=p,
        analytic_bias=analytic_bias(est, fam, p, n),
        mc_bias=mean - p,
        mc_stderr=stderr,
        trials=trials,
    )
