"""Penalized PLE over one-coefficient estimator classes.

The constrained problem

    maximize  log P(X; H(X))   subject to   E[H(Y) - H(X)] = 0,  Y ~ P(.; H(X))

is relaxed to ``loglik - lam * ||constraint||**2``.  The constraint is a
Monte-Carlo mean over ``k`` synthetic datasets that are produced by
re-transforming one fixed bank of uniforms, so the objective is a
deterministic, piecewise-smooth function of the class coefficient and a
simplex search can work on it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from .distributions import SeededRng, get_family, log_likelihood
from .estimators import EstimatorFn, InsufficientDataError

log = logging.getLogger(__name__)

__all__ = [
    "ConstraintEstimate",
    "EstimatorClass",
    "FitDiagnostics",
    "InfeasibleCandidateError",
    "InfeasibleError",
    "PenaltyConfig",
    "estimate_constraint",
    "ple_fit",
    "ple_point_estimate",
]

INFEASIBLE_OBJECTIVE = 1e18

FORMS = {
    "linear": "one_sided_uniform",
    "scaled_max": "one_sided_uniform",
    "quadratic_centered": "gaussian",
}


class InfeasibleCandidateError(ValueError):
    """H(X) falls outside the family's parameter domain."""


class InfeasibleError(RuntimeError):
    """Every candidate the optimizer visited had zero likelihood."""


@dataclass(frozen=True)
class EstimatorClass:
    """A permutation-symmetric estimator family with one shared coefficient.

    * ``linear``: ``a = theta * sum(x)`` (uniform).
    * ``scaled_max``: ``a = theta * max(x)`` (uniform).
    * ``quadratic_centered``: ``(mean, theta * sum((x - mean)**2))`` (Gaussian).
    """

    family_tag: str
    form: str
    theta: float = float("nan")

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"unknown estimator form {self.form!r}")
        if get_family(self.family_tag).tag != FORMS[self.form]:
            raise ValueError(f"form {self.form!r} does not apply to {self.family_tag!r}")

    def apply(self, data, theta: float | None = None) -> np.ndarray:
        t = self.theta if theta is None else theta
        x = np.sort(np.asarray(data, dtype=float), axis=-1)
        if x.shape[-1] < 1:
            raise InsufficientDataError("empty dataset")
        if self.form == "linear":
            return t * np.sum(x, axis=-1, keepdims=True)
        if self.form == "scaled_max":
            return t * x[..., -1:]
        if x.shape[-1] < 2:
            raise InsufficientDataError("quadratic_centered needs n >= 2")
        mu = np.mean(x, axis=-1, keepdims=True)
        d = x - mu
        return np.concatenate([mu, t * np.sum(d * d, axis=-1, keepdims=True)], axis=-1)

    def as_estimator(self) -> EstimatorFn:
        return EstimatorFn(f"{self.form}[{self.theta:.6g}]", FORMS[self.form], self.apply)

    def start(self, data) -> float:
        """MLE-reproducing coefficient, nudged inside the likelihood's support."""
        x = np.asarray(data, dtype=float)
        n = x.shape[-1]
        if self.form == "linear":
            return 1.01 * float(np.max(x) / np.sum(x))
        if self.form == "scaled_max":
            return 1.0
        return 1.0 / n


@dataclass(frozen=True)
class PenaltyConfig:
    lam: float = 0.1
    m: int | None = None  # synthetic dataset size, defaults to n
    k: int = 1000
    xatol: float = 1e-6
    max_iter: int = 5000

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.k < 1 or (self.m is not None and self.m < 1):
            raise ValueError("m and k must be >= 1")


@dataclass
class ConstraintEstimate:
    value: np.ndarray
    stderr: np.ndarray
    m: int
    k: int

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.value**2)))

    @property
    def norm_stderr(self) -> float:
        """Stderr of the norm (delta method; falls back to the largest stderr at 0)."""
        nrm = self.norm
        if nrm == 0.0:
            return float(np.max(self.stderr))
        return float(np.sqrt(np.sum((self.value / nrm) ** 2 * self.stderr**2)))


def _synthetic(family, theta_x: np.ndarray, bank: np.ndarray) -> np.ndarray:
    return family.transform(theta_x, bank)


def _constraint_from_bank(H, theta_x, family, bank) -> tuple[np.ndarray, np.ndarray]:
    diff = H(_synthetic(family, theta_x, bank)) - theta_x
    k = diff.shape[0]
    stderr = diff.std(axis=0, ddof=1) / np.sqrt(k) if k > 1 else np.full(diff.shape[1], np.inf)
    return diff.mean(axis=0), stderr


def _bank(family, n: int, cfg: PenaltyConfig, rng: SeededRng) -> tuple[np.ndarray, int]:
    m = cfg.m or n
    return family.uniforms(rng.generator(), (cfg.k, m)), m


def estimate_constraint(H, data, family, cfg: PenaltyConfig, rng: SeededRng) -> ConstraintEstimate:
    """Monte-Carlo ``E[H(Y) - H(X)]`` with ``Y ~ P(.; H(X))``, conditioning on X."""
    fam = get_family(family)
    x = np.asarray(data, dtype=float)
    theta_x = np.asarray(H(x), dtype=float)
    if not fam.in_domain(theta_x):
        raise InfeasibleCandidateError(f"H(X) = {theta_x} outside the {fam.tag} domain")
    bank, m = _bank(fam, x.shape[-1], cfg, rng)
    value, stderr = _constraint_from_bank(H, theta_x, fam, bank)
    return ConstraintEstimate(value, stderr, m, cfg.k)


@dataclass
class FitDiagnostics:
    converged: bool
    iterations: int
    evaluations: int
    objective: float
    log_likelihood: float
    constraint: ConstraintEstimate
    message: str = ""
    history: list[tuple[float, float]] = field(default_factory=list, repr=False)


def _objective_parts(cls: EstimatorClass, theta, x, fam, bank, lam):
    est = cls.apply(x, theta)
    if not fam.in_domain(est):
        return -np.inf, None
    ll = float(log_likelihood(fam, est, x))
    if not np.isfinite(ll):
        return -np.inf, None
    value, stderr = _constraint_from_bank(lambda d: cls.apply(d, theta), est, fam, bank)
    return ll, (value, stderr)


def ple_fit(
    cls: EstimatorClass,
    data,
    family=None,
    cfg: PenaltyConfig | None = None,
    rng: SeededRng | None = None,
    start: float | None = None,
) -> tuple[EstimatorClass, FitDiagnostics]:
    """Fit the class coefficient by Nelder-Mead on the penalized log-likelihood.

    Infeasible coefficients (zero likelihood or parameters outside the
    domain) score ``-1e18`` instead of being excluded so the simplex can walk
    back.  Hitting ``max_iter`` is reported through ``converged=False``.
    """
    cfg = cfg or PenaltyConfig()
    rng = rng or SeededRng()
    fam = get_family(family or cls.family_tag)
    if fam.tag != FORMS[cls.form]:
        raise ValueError(f"form {cls.form!r} incompatible with family {fam.tag!r}")
    x = np.asarray(data, dtype=float)
    if x.ndim != 1 or x.size < 1:
        raise InsufficientDataError("ple_fit expects a non-empty 1-D dataset")
    bank, m = _bank(fam, x.size, cfg, rng)
    x0 = cls.start(x) if start is None else float(start)
    history: list[tuple[float, float]] = []

    def neg_objective(v):
        ll, con = _objective_parts(cls, float(v[0]), x, fam, bank, cfg.lam)
        if con is None:
            f = INFEASIBLE_OBJECTIVE
        else:
            f = -(ll - cfg.lam * float(np.sum(con[0] ** 2)))
        history.append((float(v[0]), f))
        return f

    step = 0.05 * abs(x0) if x0 != 0 else 0.05
    res = optimize.minimize(
        neg_objective,
        np.array([x0]),
        method="Nelder-Mead",
        options={
            "xatol": cfg.xatol,
            "fatol": np.inf,  # stop on simplex diameter alone
            "maxiter": cfg.max_iter,
            "maxfev": 4 * cfg.max_iter,
            "initial_simplex": np.array([[x0], [x0 + step]]),
        },
    )
    theta = float(res.x[0])
    if res.fun >= INFEASIBLE_OBJECTIVE:
        raise InfeasibleError("no candidate coefficient had nonzero likelihood")
    ll, con = _objective_parts(cls, theta, x, fam, bank, cfg.lam)
    fitted = replace(cls, theta=theta)
    diag = FitDiagnostics(
        converged=bool(res.success),
        iterations=int(res.nit),
        evaluations=int(res.nfev),
        objective=-float(res.fun),
        log_likelihood=ll,
        constraint=ConstraintEstimate(con[0], con[1], m, cfg.k),
        message=str(res.message),
        history=history,
    )
    if not diag.converged:
        log.warning("ple_fit did not converge: %s", res.message)
    return fitted, diag


def ple_point_estimate(fitted: EstimatorClass, data) -> np.ndarray:
    if not np.isfinite(fitted.theta):
        raise ValueError("estimator class has not been fitted")
    return fitted.apply(data)
