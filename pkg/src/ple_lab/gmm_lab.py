"""EM versus PLE on imbalanced two-component 1-D Gaussian mixtures.

The benchmark draws ``n`` points from a mixture with means (0, 2) and unit
variances, fits it by EM and by a PLE method, and scores both fits by the
sampled divergence KL(fit || truth).  ``D = KL_MLE - KL_PLE`` so that
positive values mean PLE did better.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .distributions import SeededRng, get_family, sample

log = logging.getLogger(__name__)

__all__ = [
    "CellResult",
    "EmConfig",
    "EmResult",
    "FairnessReport",
    "GridResult",
    "GridSpec",
    "canonical",
    "em_batch",
    "em_fit",
    "fairness_report",
    "gaussian_kl",
    "kl_divergence",
    "run_grid",
]

GMM = get_family("gmm2")
VAR_FLOOR = 1e-6
SCORE_CAP = 1e6


@dataclass(frozen=True)
class EmConfig:
    tol: float = 1e-12  # on the change of mean per-point log-likelihood
    max_iter: int = 100_000
    restarts: int = 5

    def __post_init__(self):
        if not self.tol > 0 or self.max_iter < 1 or self.restarts < 1:
            raise ValueError("invalid EM configuration")


@dataclass
class EmResult:
    params: np.ndarray
    log_likelihood: float
    iterations: int
    converged: bool
    floored: bool
    history: np.ndarray = field(repr=False)  # mean log-likelihood per iteration, best restart


def _e_step(x, mu, var, w1):
    """First-component responsibilities and pointwise log-likelihood.

    ``x`` is ``(rows, n)``; ``mu`` and ``var`` are ``(rows, 2)``.
    """
    c = []
    with np.errstate(divide="ignore"):  # a weight may collapse to exactly 0
        logw = (np.log(w1), np.log1p(-w1))
    for k in (0, 1):
        v = var[:, k : k + 1]
        c.append((logw[k][:, None] - 0.5 * np.log(2 * np.pi * v)) - (x - mu[:, k : k + 1]) ** 2 / (2.0 * v))
    ll = np.logaddexp(c[0], c[1])
    return np.exp(c[0] - ll), ll


def _em_rows(x, mu, var, w1, tol, max_iter, keep_history):
    """Run EM independently on every row of ``x`` from the given starts.

    The E-step of each pass also yields the log-likelihood of the current
    parameters, which is what the stopping rule compares.
    """
    rows, n = x.shape
    floored = np.zeros(rows, dtype=bool)
    active = np.ones(rows, dtype=bool)
    iters = np.zeros(rows, dtype=int)
    prev = np.full(rows, -np.inf)
    hist = [[] for _ in range(rows)] if keep_history else None
    for _ in range(max_iter + 1):
        a = np.flatnonzero(active)
        if a.size == 0:
            break
        xa = x[a]
        r1, ll = _e_step(xa, mu[a], var[a], w1[a])
        cur = ll.mean(axis=1)
        if keep_history:
            for j, r in enumerate(a):
                hist[r].append(cur[j])
        done = np.abs(cur - prev[a]) < tol
        prev[a] = cur
        active[a[done]] = False
        keep = ~done & (iters[a] < max_iter)
        a, xa, r1 = a[keep], xa[keep], r1[keep]
        if a.size == 0:
            continue
        new_mu = np.empty((a.size, 2))
        new_var = np.empty((a.size, 2))
        nk = np.empty((a.size, 2))
        for k, r in enumerate((r1, 1.0 - r1)):
            nk[:, k] = r.sum(axis=1)
            safe = np.maximum(nk[:, k], 1e-300)
            m = (r * xa).sum(axis=1) / safe
            new_mu[:, k] = np.where(nk[:, k] > 0, m, mu[a, k])
            new_var[:, k] = (r * (xa - new_mu[:, k : k + 1]) ** 2).sum(axis=1) / safe
        low = ~(new_var >= VAR_FLOOR)
        floored[a] |= low.any(axis=1)
        mu[a], var[a], w1[a] = new_mu, np.where(low, VAR_FLOOR, new_var), nk[:, 0] / n
        iters[a] += 1
    return prev, iters, ~active, floored, hist


def _starts(x, restarts, gen):
    """Means at two distinct data points, pooled variance, equal weights."""
    B, n = x.shape
    pick = np.argsort(gen.random((B, restarts, n)), axis=-1)[..., :2]
    mu = np.take_along_axis(x[:, None, :], pick, axis=-1)  # (B, R, 2)
    v = np.maximum(x.var(axis=1), VAR_FLOOR)
    var = np.broadcast_to(v[:, None, None], mu.shape).copy()
    return mu, var, np.full((B, restarts), 0.5)


def em_batch(data, cfg: EmConfig | None = None, rng: SeededRng | None = None) -> np.ndarray:
    """:func:`em_fit` over every row of a ``(B, n)`` array; returns ``(B, 5)``."""
    cfg = cfg or EmConfig()
    x = np.sort(np.asarray(data, dtype=float), axis=-1)
    if x.ndim != 2 or x.shape[1] < 4:
        raise ValueError("EM needs a (B, n) array with n >= 4")
    B, n = x.shape
    R = cfg.restarts
    mu, var, w1 = _starts(x, R, (rng or SeededRng()).generator())
    xr = np.repeat(x, R, axis=0)
    ll, _, _, _, _ = _em_rows(
        xr, mu.reshape(-1, 2), var.reshape(-1, 2), w1.reshape(-1), cfg.tol, cfg.max_iter, False
    )
    mu, var, w1 = mu.reshape(-1, 2), var.reshape(-1, 2), w1.reshape(-1)
    best = np.arange(B) * R + np.argmax(ll.reshape(B, R), axis=1)
    return np.column_stack([mu[best], var[best], w1[best]])


def em_fit(data, cfg: EmConfig | None = None, rng: SeededRng | None = None) -> EmResult:
    """Best-of-``restarts`` EM for a two-component mixture.

    Each restart starts from two distinct random data points as means, the
    data variance for both components, and equal weights.  Variances are
    floored at 1e-6 and the result is flagged when that happens.
    """
    cfg = cfg or EmConfig()
    x = np.sort(np.asarray(data, dtype=float).ravel())
    if x.size < 4:
        raise ValueError("EM needs at least 4 points")
    R = cfg.restarts
    mu, var, w1 = _starts(x[None, :], R, (rng or SeededRng()).generator())
    mu, var, w1 = mu[0], var[0], w1[0]
    ll, iters, conv, floored, hist = _em_rows(
        np.broadcast_to(x, (R, x.size)), mu, var, w1, cfg.tol, cfg.max_iter, True
    )
    best = int(np.argmax(ll))
    if floored[best]:
        log.debug("EM variance floor hit")
    return EmResult(
        params=np.array([mu[best, 0], mu[best, 1], var[best, 0], var[best, 1], w1[best]]),
        log_likelihood=float(ll[best] * x.size),
        iterations=int(iters[best]),
        converged=bool(conv[best]),
        floored=bool(floored[best]),
        history=np.array(hist[best]),
    )


def canonical(params) -> np.ndarray:
    """Order components by (mean, variance, heavier first); the mixture is unchanged."""
    p = np.asarray(params, dtype=float)
    if (p[1], p[3], p[4] - 1.0) < (p[0], p[2], -p[4]):
        return np.array([p[1], p[0], p[3], p[2], 1.0 - p[4]])
    return p.copy()


def kl_divergence(q, p, samples: int = 100_000, rng: SeededRng | None = None):
    """Sampled KL(q || p) as ``(estimate, stderr)``; x ~ q from a seeded bank."""
    q = canonical(GMM.check(q))
    p = canonical(GMM.check(p))
    banks = GMM.uniforms((rng or SeededRng()).generator(), samples)
    x = GMM.transform(q, banks)
    d = GMM.logpdf(q, x) - GMM.logpdf(p, x)
    return float(d.mean()), float(d.std(ddof=1) / np.sqrt(samples))


def gaussian_kl(mu_q, var_q, mu_p, var_p) -> float:
    """Closed-form KL(N(mu_q, var_q) || N(mu_p, var_p))."""
    return 0.5 * (np.log(var_p / var_q) + (var_q + (mu_q - mu_p) ** 2) / var_p - 1.0)


@dataclass
class FairnessReport:
    s_maj: float
    s_min: float
    kl_maj: float
    kl_min: float

    @property
    def r_fair(self) -> float:
        return self.s_maj / self.s_min


def _match(fit: np.ndarray, truth: np.ndarray) -> tuple[int, int]:
    """Fit component index paired with true components 0 and 1."""
    straight = abs(fit[0] - truth[0]) + abs(fit[1] - truth[1])
    crossed = abs(fit[1] - truth[0]) + abs(fit[0] - truth[1])
    if straight < crossed:
        return 0, 1
    if crossed < straight:
        return 1, 0
    # tie: pair by weight rank
    fit_heavy = 0 if fit[4] >= 1.0 - fit[4] else 1
    true_heavy = 0 if truth[4] >= 1.0 - truth[4] else 1
    return (0, 1) if fit_heavy == true_heavy else (1, 0)


def _score(kl: float) -> float:
    return SCORE_CAP if kl <= 1.0 / SCORE_CAP else 1.0 / kl


def fairness_report(fit, truth) -> FairnessReport:
    """Per-class scores ``1 / KL(fitted component || true component)``.

    The majority class is the true component with the larger weight (the
    first one on a tie).
    """
    fit = canonical(GMM.check(fit))
    truth = GMM.check(truth)
    pair = _match(fit, truth)
    kls = [
        float(gaussian_kl(fit[pair[k]], fit[2 + pair[k]], truth[k], truth[2 + k]))
        for k in (0, 1)
    ]
    maj = 0 if truth[4] >= 1.0 - truth[4] else 1
    return FairnessReport(
        s_maj=_score(kls[maj]), s_min=_score(kls[1 - maj]), kl_maj=kls[maj], kl_min=kls[1 - maj]
    )


# --------------------------------------------------------------------------- grid


@dataclass(frozen=True)
class GridSpec:
    weights: tuple[float, ...] = (0.5, 0.6, 0.7, 0.8, 0.9, 0.95)
    sizes: tuple[int, ...] = (20, 50, 100, 500, 2000)
    seeds: int = 100
    kl_samples: int = 100_000
    means: tuple[float, float] = (0.0, 2.0)
    variances: tuple[float, float] = (1.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        if not all(0.0 < w < 1.0 for w in self.weights):
            raise ValueError("weights must lie in (0, 1)")
        if self.seeds < 1 or self.kl_samples < 1 or not all(n >= 1 for n in self.sizes):
            raise ValueError("counts must be >= 1")

    def truth(self, w1: float) -> np.ndarray:
        return np.array([*self.means, *self.variances, w1])


@dataclass
class CellResult:
    weight: float
    n: int
    kl_mle: np.ndarray
    kl_ple: np.ndarray
    rfair_mle: np.ndarray
    rfair_ple: np.ndarray
    failures: list[str] = field(default_factory=list)

    @property
    def d(self) -> np.ndarray:
        return self.kl_mle - self.kl_ple

    def d_stderr(self) -> float:
        d = self.d[np.isfinite(self.d)]
        return float(d.std(ddof=1) / np.sqrt(d.size)) if d.size > 1 else float("nan")

    def row(self) -> dict:
        def m(a):
            a = a[np.isfinite(a)]
            return float(a.mean()) if a.size else float("nan")

        return {
            "weight": self.weight,
            "n": self.n,
            "kl_mle_mean": m(self.kl_mle),
            "kl_ple_mean": m(self.kl_ple),
            "d_mean": m(self.d),
            "d_stderr": self.d_stderr(),
            "rfair_mle": m(self.rfair_mle),
            "rfair_ple": m(self.rfair_ple),
        }


COLUMNS = ("weight", "n", "kl_mle_mean", "kl_ple_mean", "d_mean", "d_stderr", "rfair_mle", "rfair_ple")


@dataclass
class GridResult:
    cells: list[CellResult]
    method: str

    def cell(self, weight: float, n: int) -> CellResult:
        for c in self.cells:
            if c.weight == weight and c.n == n:
                return c
        raise KeyError((weight, n))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for c in self.cells:
            r = c.row()
            w.writerow([r["weight"], r["n"]] + [repr(r[k]) for k in COLUMNS[2:]])
        return buf.getvalue()


def _cell_rng(spec: GridSpec, w1: float, n: int) -> SeededRng:
    # keyed by the cell itself so results do not depend on the grid's shape
    return SeededRng(spec.seed, 0xC0FFEE).child(int(round(w1 * 1e6))).child(n)


def _run_cell(spec: GridSpec, w1: float, n: int, ple_method: str, em_cfg: EmConfig, method_kw: dict) -> CellResult:
    from .gmm_ple import make_fitter

    rng = _cell_rng(spec, w1, n)
    truth = spec.truth(w1)
    fit_ple = make_fitter(ple_method, truth, n, rng.child(0), **dict(method_kw))
    kl_m, kl_p, rf_m, rf_p, failures = [], [], [], [], []
    for s in range(spec.seeds):
        srng = rng.child(1 + s)
        x = sample(GMM, truth, n, srng.child(0))
        kl_rng = srng.child(3)  # shared by both fits: paired comparison
        try:
            q_mle = em_fit(x, em_cfg, srng.child(1)).params
            q_ple = fit_ple(x, srng.child(2))
            row = (
                kl_divergence(q_mle, truth, spec.kl_samples, kl_rng)[0],
                kl_divergence(q_ple, truth, spec.kl_samples, kl_rng)[0],
                fairness_report(q_mle, truth).r_fair,
                fairness_report(q_ple, truth).r_fair,
            )
        except Exception as exc:  # recorded per cell, not fatal
            failures.append(f"seed {s}: {exc!r}")
            row = (np.nan,) * 4
        for lst, v in zip((kl_m, kl_p, rf_m, rf_p), row):
            lst.append(v)
    cell = CellResult(w1, n, np.array(kl_m), np.array(kl_p), np.array(rf_m), np.array(rf_p), failures)
    log.info("cell w1=%s n=%s: %s", w1, n, cell.row())
    return cell


def run_grid(
    spec: GridSpec,
    ple_method: str = "hypernet",
    em_cfg: EmConfig | None = None,
    workers: int = 1,
    **method_kw,
) -> GridResult:
    """Evaluate every (weight, n) cell over ``spec.seeds`` paired seeds.

    ``ple_method`` is ``"hypernet"`` (amortized set encoder trained on fresh
    datasets from the cell's true mixture) or ``"solver"`` (per-dataset
    penalized fit, see :mod:`ple_lab.gmm_ple`).  Extra keyword arguments go
    to the method's fitter factory.  Cells are independent and seeded by
    their own (weight, n), so ``workers > 1`` runs them in threads without
    changing any number.
    """
    em_cfg = em_cfg or EmConfig()
    jobs = [(w1, n) for w1 in spec.weights for n in spec.sizes]

    def run(job):
        return _run_cell(spec, job[0], job[1], ple_method, em_cfg, method_kw)

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(run, jobs))
    else:
        cells = [run(j) for j in jobs]
    return GridResult(cells, ple_method)
