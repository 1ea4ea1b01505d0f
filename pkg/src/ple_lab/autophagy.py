"""Self-consuming estimation loop: theta -> X -> theta_hat -> X_hat -> ...

Row ``g`` of a trace holds the parameter after ``g`` estimation steps: row 0
is the true parameter, row 1 the fit to data drawn under it, row ``g + 1``
the fit to data drawn under row ``g``.  With this convention the uniform MLE
chain has expectation ``(n / (n + 1))**g * a`` at row ``g``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .distributions import SeededRng, get_family
from .estimators import get_estimator

__all__ = ["ConfigurationError", "GenerationTrace", "LoopConfig", "collapse_rate", "run_loop"]


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class LoopConfig:
    family: str
    params: tuple[float, ...]
    n: int = 20
    generations: int = 10
    trials: int = 100
    estimator: str = "mle"

    def __post_init__(self):
        if self.generations < 1 or self.trials < 1 or self.n < 1:
            raise ConfigurationError("generations, trials and n must all be >= 1")


@dataclass
class GenerationTrace:
    estimates: np.ndarray  # (trials, generations + 1, params)
    flagged: np.ndarray  # (trials,) chain hit a degenerate parameter
    param_names: tuple[str, ...]
    config: LoopConfig | None = None

    @property
    def trials(self) -> int:
        return self.estimates.shape[0]

    @property
    def generations(self) -> int:
        return self.estimates.shape[1] - 1

    def _param_index(self, param) -> int:
        if param is None:
            return len(self.param_names) - 1
        if isinstance(param, str):
            return self.param_names.index(param)
        return int(param)

    def values(self, param=None, transform=None) -> np.ndarray:
        v = self.estimates[..., self._param_index(param)]
        return transform(v) if transform is not None else v

    def mean(self, param=None, transform=None) -> np.ndarray:
        return self.values(param, transform).mean(axis=0)

    def stderr(self, param=None, transform=None) -> np.ndarray:
        if self.trials < 2:
            return np.zeros(self.generations + 1)
        return self.values(param, transform).std(axis=0, ddof=1) / np.sqrt(self.trials)

    def to_csv(self, param=None, transform=None) -> str:
        """Three-column ``x,y,error`` table (generation, mean, standard error)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "error"])
        for g, (m, s) in enumerate(zip(self.mean(param, transform), self.stderr(param, transform))):
            w.writerow([g, repr(float(m)), repr(float(s))])
        return buf.getvalue()


def run_loop(cfg: LoopConfig, rng: SeededRng) -> GenerationTrace:
    """Run ``cfg.trials`` independent chains for ``cfg.generations`` steps.

    Generation ``g`` draws from stream ``rng.child(g)``; the first draw uses
    ``rng`` itself, so row 1 matches :func:`monte_carlo_bias` called with the
    same ``rng``.  A chain whose estimate leaves the family's domain (for
    example ``a = 0``) is frozen at that value and flagged.
    """
    fam = get_family(cfg.family)
    try:
        est = get_estimator(cfg.estimator, fam)
    except KeyError as exc:
        raise ConfigurationError(str(exc)) from None
    if est.family_tag != fam.tag:
        raise ConfigurationError(f"estimator {est.name} does not apply to family {fam.tag}")
    if cfg.n < est.min_n:
        raise ConfigurationError(f"{est.name} needs n >= {est.min_n}")
    theta = fam.check(cfg.params)

    T, G = cfg.trials, cfg.generations
    out = np.empty((T, G + 1, fam.param_count))
    out[:, 0] = theta
    current = np.broadcast_to(theta, (T, fam.param_count)).copy()
    flagged = np.zeros(T, dtype=bool)
    for g in range(G):
        stream = rng if g == 0 else rng.child(g)
        banks = fam.uniforms(stream.generator(), (T, cfg.n))
        live = ~flagged
        nxt = current.copy()
        if live.any():
            x = fam.transform(current[live], banks[:, live])
            nxt[live] = est(x)
        bad = live & ~fam.in_domain(nxt)
        flagged |= bad
        out[:, g + 1] = nxt
        current = nxt
    return GenerationTrace(out, flagged, fam.param_names, cfg)


def collapse_rate(trace: GenerationTrace, param=None) -> float:
    """Least-squares slope of log(mean estimate) against generation."""
    if trace.generations < 2:
        raise ValueError("collapse rate needs at least two generations")
    m = trace.mean(param)
    if np.any(m <= 0):
        raise ValueError("undefined collapse rate: nonpositive generation mean")
    g = np.arange(m.size, dtype=float)
    slope, _ = np.polyfit(g, np.log(m), 1)
    return float(slope)
