"""PLE fitters for the two-component mixture benchmark.

Two methods are available through :func:`make_fitter`:

``hypernet``
    A set encoder trained once per cell on fresh datasets from the cell's
    true mixture, then frozen and applied to each evaluation dataset.

``solver``
    A per-dataset penalized fit of a one-coefficient class: the EM fit with
    both component variances multiplied by a shared ``c``.  ``c = 1`` is the
    MLE; the self-consistency penalty moves it the way the Bessel factor
    moves the Gaussian variance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .distributions import SeededRng, get_family
from .gmm_lab import EmConfig, _em_rows, em_fit
from .hypernet import HyperNet, TrainConfig, forward, gmm_dataset_stream, train

__all__ = ["GmmPenaltyConfig", "fit_variance_scale", "make_fitter"]

GMM = get_family("gmm2")
Fitter = Callable[[np.ndarray, SeededRng], np.ndarray]


@dataclass(frozen=True)
class GmmPenaltyConfig:
    lam: float = 0.1
    k: int = 16  # synthetic datasets per constraint estimate
    inner_tol: float = 1e-7
    inner_max_iter: int = 2000
    xatol: float = 1e-4
    max_iter: int = 200

    def __post_init__(self):
        if self.lam < 0 or self.k < 1:
            raise ValueError("lam must be >= 0 and k >= 1")


def _scaled(theta: np.ndarray, c) -> np.ndarray:
    out = np.array(theta, dtype=float)
    out[..., 2:4] *= c
    return out


def _refit(y: np.ndarray, start: np.ndarray, cfg: GmmPenaltyConfig) -> np.ndarray:
    """Warm-started single-run EM on each row of ``y``."""
    rows = y.shape[0]
    mu = np.tile(start[0:2], (rows, 1))
    var = np.tile(start[2:4], (rows, 1))
    w1 = np.full(rows, start[4])
    _em_rows(np.sort(y, axis=1), mu, var, w1, cfg.inner_tol, cfg.inner_max_iter, False)
    return np.column_stack([mu, var, w1])


def fit_variance_scale(
    data,
    cfg: GmmPenaltyConfig | None = None,
    rng: SeededRng | None = None,
    em_cfg: EmConfig | None = None,
) -> tuple[np.ndarray, float]:
    """Penalized fit of ``c`` for ``H_c(X) = EM(X)`` with variances times ``c``.

    Objective: mean log-likelihood minus ``lam * ||mean_j H_c(Y_j) - H_c(X)||^2``
    with ``Y_j`` drawn under ``H_c(X)`` from one fixed uniform bank.
    Returns ``(parameters, c)``.
    """
    cfg = cfg or GmmPenaltyConfig()
    rng = rng or SeededRng()
    x = np.asarray(data, dtype=float).ravel()
    base = em_fit(x, em_cfg, rng.child(0)).params
    banks = GMM.uniforms(rng.child(1).generator(), (cfg.k, x.size))

    def objective(v):
        c = float(v[0])
        if not c > 0:
            return 1e18
        theta = _scaled(base, c)
        ll = GMM.logpdf(theta, x).mean()
        y = GMM.transform(theta, banks)
        gap = _scaled(_refit(y, base, cfg), c).mean(axis=0) - theta
        return -(ll - cfg.lam * float(gap @ gap))

    res = minimize(
        objective,
        np.array([1.0]),
        method="Nelder-Mead",
        options={
            "initial_simplex": np.array([[1.0], [1.05]]),
            "xatol": cfg.xatol,
            "fatol": np.inf,
            "maxiter": cfg.max_iter,
        },
    )
    c = float(res.x[0])
    return _scaled(base, c), c


def make_fitter(method: str, truth, n: int, rng: SeededRng, **kw) -> Fitter:
    """Build ``fit(x, rng) -> params`` for one grid cell.

    ``train`` (hypernet) holds :class:`TrainConfig` overrides other than
    ``n``; ``penalty_cfg`` and ``em_cfg`` configure the solver.
    """
    if method == "hypernet":
        tcfg = TrainConfig(n=n, **kw.pop("train", {}))
        _no_extra(kw)
        net, _ = train(HyperNet.init(tcfg.seed), gmm_dataset_stream(truth, n, tcfg.batch, rng), tcfg)
        return lambda x, _rng: forward(net, x)
    if method == "solver":
        pcfg = kw.pop("penalty_cfg", None) or GmmPenaltyConfig()
        em_cfg = kw.pop("em_cfg", None)
        _no_extra(kw)
        return lambda x, r: fit_variance_scale(x, pcfg, r, em_cfg)[0]
    raise ValueError(f"unknown PLE method {method!r} (expected 'hypernet' or 'solver')")


def _no_extra(kw: dict) -> None:
    if kw:
        raise TypeError(f"unexpected options: {sorted(kw)}")
