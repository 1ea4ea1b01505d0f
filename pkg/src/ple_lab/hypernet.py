"""Permutation-invariant set encoder that predicts two-component GMM parameters.

``H(X) = head(trunk(mean_i encoder(x_i)))`` with three linear branch heads:
means (identity), variances (softplus) and responsibilities (softmax).
Trained on ``NLL(X; H(X)) + lam * ||H(Y) - H(X)||**2`` where ``Y`` is a
reparameterized sample from ``H(X)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np
from scipy.special import ndtri

from . import autodiff as ad
from .distributions import SeededRng, get_family, open_uniforms, sample

__all__ = [
    "DenseNet",
    "HyperNet",
    "TrainConfig",
    "TrainingDivergedError",
    "forward",
    "gmm_dataset_stream",
    "load_checkpoint",
    "loss",
    "penalty_banks",
    "save_checkpoint",
    "train",
]

_LOG_2PI = math.log(2.0 * math.pi)
VAR_EPS = 1e-6
_ACTIVATIONS = {
    "relu": ad.relu,
    "identity": lambda a: a,
    "softplus": ad.softplus,
    "softmax": ad.softmax,
}


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class DenseNet:
    sizes: tuple[int, ...]
    activations: tuple[str, ...]
    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if len(self.activations) != len(self.sizes) - 1:
            raise ValueError("need one activation per layer")
        for a in self.activations:
            if a not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[i], self.sizes[i + 1]) or b.shape != (self.sizes[i + 1],):
                raise ValueError(f"layer {i} has shape {w.shape}/{b.shape}")

    @classmethod
    def init(cls, sizes, activations, gen: np.random.Generator) -> DenseNet:
        ws, bs = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            ws.append(gen.uniform(-bound, bound, size=(fan_in, fan_out)))
            bs.append(gen.uniform(-bound, bound, size=fan_out))
        return cls(tuple(sizes), tuple(activations), ws, bs)

    def named_params(self, prefix: str):
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            yield f"{prefix}.{i}.weight", w
            yield f"{prefix}.{i}.bias", b

    def apply(self, x: ad.Node, leaves: dict, prefix: str) -> ad.Node:
        h = x
        for i, act in enumerate(self.activations):
            h = h @ leaves[f"{prefix}.{i}.weight"] + leaves[f"{prefix}.{i}.bias"]
            h = _ACTIVATIONS[act](h)
        return h


HEADS = (("means", "identity"), ("variances", "softplus"), ("weights", "softmax"))


@dataclass
class HyperNet:
    encoder: DenseNet
    trunk: DenseNet
    heads: dict[str, DenseNet]

    @classmethod
    def init(cls, seed: int = 0, hidden: int = 8, layers: int = 3) -> HyperNet:
        gen = SeededRng(seed, 0x4E7).generator()
        enc = DenseNet.init((1,) + (hidden,) * layers, ("relu",) * layers, gen)
        trunk = DenseNet.init((hidden,) * layers, ("relu",) * (layers - 1), gen)
        heads = {name: DenseNet.init((hidden, 2), (act,), gen) for name, act in HEADS}
        return cls(enc, trunk, heads)

    def params(self) -> dict[str, np.ndarray]:
        """Name -> array, in a fixed order; arrays are live references."""
        out = dict(self.encoder.named_params("encoder"))
        out.update(self.trunk.named_params("trunk"))
        for name, _ in HEADS:
            out.update(self.heads[name].named_params(f"head.{name}"))
        return out

    def copy(self) -> HyperNet:
        def dup(net):
            return DenseNet(
                net.sizes, net.activations, [w.copy() for w in net.weights],
                [b.copy() for b in net.biases],
            )

        return HyperNet(dup(self.encoder), dup(self.trunk), {k: dup(v) for k, v in self.heads.items()})

    def apply(self, x: ad.Node, leaves: dict) -> ad.Node:
        """``x`` has shape ``(B, n)`` and must already be sorted along axis 1."""
        B, n = x.shape
        feats = self.encoder.apply(x.reshape(B, n, 1), leaves, "encoder")
        pooled = ad.mean(feats, axis=1)
        z = self.trunk.apply(pooled, leaves, "trunk")
        means = self.heads["means"].apply(z, leaves, "head.means")
        # softplus underflows to 0 for very negative logits
        variances = self.heads["variances"].apply(z, leaves, "head.variances") + VAR_EPS
        weights = self.heads["weights"].apply(z, leaves, "head.weights")
        return ad.concat([means, variances, weights[:, 0:1]], axis=-1)


def _batched(data) -> tuple[np.ndarray, bool]:
    x = np.asarray(data, dtype=float)
    if x.ndim == 0 or x.shape[-1] < 1:
        raise ValueError("dataset must contain at least one point")
    single = x.ndim == 1
    return np.sort(x.reshape(-1, x.shape[-1]), axis=-1), single


def forward(net: HyperNet, data) -> np.ndarray:
    """GMM parameters ``(mu1, mu2, var1, var2, w1)`` for one dataset or a batch."""
    x, single = _batched(data)
    tape = ad.Tape()
    leaves = {k: tape.const(v) for k, v in net.params().items()}
    out = net.apply(tape.const(x), leaves).value
    return out[0] if single else out


def _gmm_loglik(x: ad.Node, theta: ad.Node) -> ad.Node:
    """Pointwise mixture log-density, shape ``(B, n)``."""
    B = theta.shape[0]
    mu = theta[:, 0:2].reshape(B, 1, 2)
    var = theta[:, 2:4].reshape(B, 1, 2)
    w1 = theta[:, 4:5]
    logw = ad.log(ad.concat([w1, 1.0 - w1], axis=-1)).reshape(B, 1, 2)
    xb = x.reshape(*x.shape, 1)
    comp = logw - 0.5 * (_LOG_2PI + ad.log(var)) - (xb - mu) ** 2 / (2.0 * var)
    return ad.logsumexp(comp, axis=-1)


@dataclass
class LossResult:
    value: float
    nll: float
    penalty: float
    grads: dict[str, np.ndarray]


def penalty_banks(shape, rng: SeededRng) -> tuple[np.ndarray, np.ndarray]:
    """Component-choice uniforms and standard-normal draws for the synthetic set."""
    u = open_uniforms(rng.generator(), (2, *shape))
    return u[0], ndtri(u[1])


def loss(
    net: HyperNet,
    data,
    lam: float = 0.1,
    m: int | None = None,
    rng: SeededRng | None = None,
    banks: tuple[np.ndarray, np.ndarray] | None = None,
    params: dict[str, np.ndarray] | None = None,
) -> LossResult:
    """Mean NLL plus ``lam`` times the squared self-consistency gap, with gradients.

    The synthetic set uses ``y = mu_c + sqrt(var_c) * z`` with ``c`` chosen by
    ``u < w1``; the choice is held constant in the backward pass, so no
    gradient reaches ``w1`` through the sampling path.
    """
    x, _ = _batched(data)
    B, n = x.shape
    tape = ad.Tape()
    source = net.params() if params is None else params
    leaves = {k: tape.leaf(v) for k, v in source.items()}
    theta_x = net.apply(tape.const(x), leaves)
    nll = -ad.mean(_gmm_loglik(tape.const(x), theta_x))
    total = nll
    pen_value = 0.0
    if lam > 0:
        m = m or n
        if banks is None:
            banks = penalty_banks((B, m), rng or SeededRng())
        u, z = banks
        first = tape.const((u < theta_x.value[:, 4:5]).astype(float))
        zc = tape.const(z)
        y1 = theta_x[:, 0:1] + ad.sqrt(theta_x[:, 2:3]) * zc
        y2 = theta_x[:, 1:2] + ad.sqrt(theta_x[:, 3:4]) * zc
        y = first * y1 + (1.0 - first) * y2
        y = ad.permute(y, np.argsort(y.value, axis=-1, kind="stable"), axis=-1)
        theta_y = net.apply(y, leaves)
        gap = theta_y - theta_x
        pen = ad.mean(ad.sum_(gap * gap, axis=-1))
        pen_value = float(pen.value)
        total = nll + lam * pen
    value = float(total.value)
    if not np.isfinite(value):
        raise TrainingDivergedError(f"non-finite loss {value}")
    tape.backward(total)
    grads = {k: (leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)) for k, leaf in leaves.items()}
    return LossResult(value, float(nll.value), pen_value, grads)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    steps: int = 2000
    batch: int = 8  # datasets per step
    n: int = 50  # points per dataset
    lam: float = 0.1
    m: int | None = None
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0 or self.steps < 1 or self.batch < 1 or self.n < 1 or self.lam < 0:
            raise ValueError("invalid training configuration")


def gmm_dataset_stream(truth, n: int, batch: int, rng: SeededRng) -> Iterator[np.ndarray]:
    """Endless fresh ``(batch, n)`` datasets from a fixed GMM."""
    fam = get_family("gmm2")
    truth = fam.check(truth)
    i = 0
    while True:
        yield sample(fam, truth, (batch, n), rng.child(i))
        i += 1


def train(net: HyperNet, datasets: Iterable[np.ndarray], cfg: TrainConfig):
    """Adam on the penalized loss; returns ``(trained copy, loss curve rows)``.

    The curve holds ``(step, nll, penalty)`` per step.
    """
    net = net.copy()
    params = net.params()
    m1 = {k: np.zeros_like(v) for k, v in params.items()}
    m2 = {k: np.zeros_like(v) for k, v in params.items()}
    noise = SeededRng(cfg.seed, 0xBA4C)
    curve = []
    it = iter(datasets)
    for step in range(1, cfg.steps + 1):
        x = next(it)
        try:
            res = loss(net, x, cfg.lam, cfg.m, rng=noise.child(step))
        except TrainingDivergedError as exc:
            raise TrainingDivergedError(f"step {step}: {exc}") from None
        curve.append((step, res.nll, res.penalty))
        c1 = 1.0 - cfg.beta1**step
        c2 = 1.0 - cfg.beta2**step
        for k, p in params.items():
            g = res.grads[k]
            m1[k] = cfg.beta1 * m1[k] + (1.0 - cfg.beta1) * g
            m2[k] = cfg.beta2 * m2[k] + (1.0 - cfg.beta2) * g * g
            p -= cfg.lr * (m1[k] / c1) / (np.sqrt(m2[k] / c2) + cfg.eps)
        if not all(np.all(np.isfinite(p)) for p in params.values()):
            raise TrainingDivergedError(f"step {step}: non-finite weights")
    return net, curve


def curve_to_csv(curve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "nll", "penalty"])
    for step, nll, pen in curve:
        w.writerow([step, repr(nll), repr(pen)])
    return buf.getvalue()


def save_checkpoint(net: HyperNet) -> str:
    """Flat CSV dump: one row per scalar, ``name,shape,index,value``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "shape", "index", "value"])
    for name, arr in net.params().items():
        shape = "x".join(str(s) for s in arr.shape)
        for i, v in enumerate(arr.ravel()):
            w.writerow([name, shape, i, repr(float(v))])
    return buf.getvalue()


def load_checkpoint(text: str, hidden: int = 8, layers: int = 3) -> HyperNet:
    net = HyperNet.init(0, hidden, layers)
    params = net.params()
    seen = set()
    for row in csv.DictReader(io.StringIO(text)):
        params[row["name"]].flat[int(row["index"])] = float(row["value"])
        seen.add(row["name"])
    if seen != set(params):
        raise ValueError(f"checkpoint missing tensors: {sorted(set(params) - seen)}")
    return net
