"""Command-line entry point: ``ple-lab <subcommand> [flags]``.

Each run writes CSV (and optionally SVG) files plus ``manifest.json`` into
``--out``.  ``ple-lab rerun DIR/manifest.json`` repeats the run from the
manifest alone.  Settings come from built-in defaults, then a ``key=value``
file given by ``--config``, then flags.

Exit codes: 0 ok, 1 internal error, 2 usage, 3 infeasible or diverged.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, svg
from .autophagy import LoopConfig, run_loop
from .density import DensityGrid, LocalEstimateMap, binned_l1, estimator_density
from .distributions import SeededRng, get_family, pdf, sample
from .estimators import analytic_bias, get_estimator, monte_carlo_bias
from .gmm_lab import GridSpec, run_grid
from .hypernet import TrainingDivergedError
from .solver import EstimatorClass, InfeasibleCandidateError, InfeasibleError, PenaltyConfig, ple_fit

log = logging.getLogger(__name__)

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_INFEASIBLE = 0, 1, 2, 3
MANIFEST = "manifest.json"


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class Opt:
    type: Callable
    default: object
    help: str


def _floats(s) -> tuple[float, ...]:
    return tuple(float(v) for v in str(s).split(",") if v.strip())


def _ints(s) -> tuple[int, ...]:
    return tuple(int(v) for v in str(s).split(",") if v.strip())


def _flag(s) -> bool:
    if isinstance(s, bool):
        return s
    return str(s).strip().lower() in ("1", "true", "yes", "on")


PARAM_OPTS = {
    "a": Opt(float, 1.0, "uniform upper bound"),
    "mu": Opt(float, 0.0, "gaussian mean"),
    "var": Opt(float, 1.0, "gaussian variance"),
}

OPTIONS: dict[str, dict[str, Opt]] = {
    "bias": {
        "family": Opt(str, None, "uniform | gaussian"),
        **PARAM_OPTS,
        "n": Opt(int, 20, "points per dataset"),
        "trials": Opt(int, 100_000, "Monte-Carlo datasets"),
        "estimators": Opt(str, "", "comma list; default: all for the family"),
    },
    "madness": {
        "family": Opt(str, None, "uniform | gaussian"),
        **PARAM_OPTS,
        "estimator": Opt(str, "mle", "e.g. mle, ple, ple-max, ple-linear"),
        "n": Opt(int, 20, "points per generation"),
        "generations": Opt(int, 10, "estimation steps"),
        "trials": Opt(int, 100, "independent chains"),
        "param": Opt(str, "", "parameter to report; default: last"),
    },
    "gmm-grid": {
        "weights": Opt(_floats, (0.5, 0.6, 0.7, 0.8, 0.9, 0.95), "w1 values, comma list"),
        "sizes": Opt(_ints, (20, 50, 100, 500, 2000), "sample sizes, comma list"),
        "seeds": Opt(int, 100, "datasets per cell"),
        "kl_samples": Opt(int, 100_000, "samples per KL estimate"),
        "method": Opt(str, "hypernet", "hypernet | solver"),
        "steps": Opt(int, 2000, "hypernet training steps"),
        "batch": Opt(int, 8, "hypernet datasets per step"),
        "lr": Opt(float, 1e-3, "hypernet learning rate"),
        "lam": Opt(float, 0.1, "penalty weight"),
    },
    "density": {
        "family": Opt(str, "uniform", "uniform | gaussian"),
        **PARAM_OPTS,
        "scale": Opt(float, 2.0, "h(x) = scale * x + shift"),
        "shift": Opt(float, 0.0, "h(x) = scale * x + shift"),
        "n": Opt(int, 5, "points averaged"),
        "nodes": Opt(int, 513, "grid nodes for the data density"),
        "mc_samples": Opt(int, 1_000_000, "Monte-Carlo estimates for the overlay"),
        "bins": Opt(int, 100, "histogram bins"),
    },
    "solver": {
        "family": Opt(str, None, "uniform | gaussian"),
        **PARAM_OPTS,
        "form": Opt(str, "", "linear | scaled_max | quadratic_centered"),
        "n": Opt(int, 20, "points in the observed dataset"),
        "lam": Opt(float, 1e5, "penalty weight"),
        "k": Opt(int, 10_000, "constraint replications"),
    },
}

COMMON = {
    "seed": Opt(int, None, "base seed (default: $PLE_LAB_SEED or 0)"),
    "threads": Opt(int, 1, "worker cap"),
    "svg": Opt(_flag, True, "also write SVG plots"),
}


# ----------------------------------------------------------------------------- helpers


def _family_params(cfg: dict) -> tuple[str, np.ndarray]:
    fam = get_family(cfg["family"])
    if fam.tag == "one_sided_uniform":
        return fam.tag, fam.check([cfg["a"]])
    if fam.tag == "gaussian":
        return fam.tag, fam.check([cfg["mu"], cfg["var"]])
    raise UsageError(f"family {cfg['family']!r} is not supported here (use uniform or gaussian)")


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _r(v) -> str:
    return "" if v is None else repr(float(v))


# ----------------------------------------------------------------------------- subcommands


def cmd_bias(cfg: dict, rng: SeededRng) -> dict[str, str]:
    tag, theta = _family_params(cfg)
    names = [s for s in cfg["estimators"].split(",") if s] or (
        ["mle", "ple-linear", "ple-max"] if tag == "one_sided_uniform" else ["mle", "ple"]
    )
    fam = get_family(tag)
    rows = []
    for i, name in enumerate(names):
        est = get_estimator(name, fam)
        if est.family_tag != tag:
            raise UsageError(f"estimator {name!r} does not apply to {tag}")
        rep = monte_carlo_bias(est, fam, theta, cfg["n"], cfg["trials"], rng.child(i))
        exact = analytic_bias(est, fam, theta, cfg["n"])
        ok = rep.agrees()
        for j, pname in enumerate(fam.param_names):
            verdict = "" if ok is None else ("pass" if ok[j] else "fail")
            rows.append(
                [est.name, pname, _r(theta[j]), _r(None if exact is None else exact[j]),
                 _r(rep.mc_bias[j]), _r(rep.mc_stderr[j]), verdict]
            )
            print(f"{est.name:20s} {pname:4s} mc_bias={rep.mc_bias[j]: .5f} +- {rep.mc_stderr[j]:.5f} {verdict}")
    header = ["estimator", "param", "true_value", "analytic_bias", "mc_bias", "mc_stderr", "check_4se"]
    return {"bias.csv": _csv(header, rows)}


def cmd_madness(cfg: dict, rng: SeededRng) -> dict[str, str]:
    tag, theta = _family_params(cfg)
    loop = LoopConfig(tag, tuple(theta), cfg["n"], cfg["generations"], cfg["trials"], cfg["estimator"])
    trace = run_loop(loop, rng)
    param = cfg["param"] or None
    out = {"madness.csv": trace.to_csv(param)}
    if cfg["svg"]:
        out["madness.svg"] = svg.line_plot(
            np.arange(trace.generations + 1), trace.mean(param), trace.stderr(param),
            title=f"{tag} / {cfg['estimator']} / n={cfg['n']}", xlabel="generation",
            ylabel=param or trace.param_names[-1],
        )
    if trace.flagged.any():
        print(f"{int(trace.flagged.sum())} chain(s) hit a degenerate parameter and were frozen")
    return out


def cmd_gmm_grid(cfg: dict, rng: SeededRng) -> dict[str, str]:
    spec = GridSpec(cfg["weights"], cfg["sizes"], cfg["seeds"], cfg["kl_samples"], seed=cfg["seed"])
    kw = {}
    if cfg["method"] == "hypernet":
        kw["train"] = dict(lr=cfg["lr"], steps=cfg["steps"], batch=cfg["batch"], lam=cfg["lam"], seed=cfg["seed"])
    elif cfg["method"] == "solver":
        from .gmm_ple import GmmPenaltyConfig

        kw["penalty_cfg"] = GmmPenaltyConfig(lam=cfg["lam"])
    else:
        raise UsageError(f"unknown method {cfg['method']!r}")
    result = run_grid(spec, cfg["method"], workers=cfg["threads"], **kw)
    out = {"grid.csv": result.to_csv()}
    if cfg["svg"]:
        d = np.array([[result.cell(w, n).row()["d_mean"] for n in spec.sizes] for w in spec.weights])
        out["grid.svg"] = svg.heatmap(
            spec.weights, spec.sizes, d, title="KL(MLE) - KL(PLE); blue: PLE better",
            row_label="w1", col_label="n",
        )
    for c in result.cells:
        r = c.row()
        print(f"w1={c.weight:<5} n={c.n:<5} D={r['d_mean']: .5f} +- {r['d_stderr']:.5f}"
              + (f"  ({len(c.failures)} failed seeds)" if c.failures else ""))
    return out


def cmd_density(cfg: dict, rng: SeededRng) -> dict[str, str]:
    tag, theta = _family_params(cfg)
    if tag == "one_sided_uniform":
        lo, hi = 0.0, float(theta[0])
    else:
        sd = float(np.sqrt(theta[1]))
        lo, hi = float(theta[0]) - 8 * sd, float(theta[0]) + 8 * sd
    f_x = DensityGrid.from_function(lambda x: pdf(tag, theta, x), lo, hi, cfg["nodes"])
    hmap = LocalEstimateMap.affine(cfg["scale"], cfg["shift"])
    grid = estimator_density(f_x, hmap, cfg["n"])

    # Monte-Carlo overlay, drawn in chunks to bound memory
    total, chunk = cfg["mc_samples"], max(1, 2_000_000 // cfg["n"])
    est = np.empty(total)
    for i, start in enumerate(range(0, total, chunk)):
        m = min(chunk, total - start)
        x = sample(tag, theta, (m, cfg["n"]), rng.child(i))
        est[start : start + m] = (cfg["scale"] * x + cfg["shift"]).mean(axis=1)
    edges = np.linspace(grid.lo, grid.hi, cfg["bins"] + 1)
    counts, _ = np.histogram(est, bins=edges)
    dens = counts / (total * np.diff(edges))
    hist = _csv(
        ["bin_lo", "bin_hi", "density"],
        [[repr(float(a)), repr(float(b)), repr(float(d))] for a, b, d in zip(edges[:-1], edges[1:], dens)],
    )
    print(f"grid mean={grid.mean():.6f} var={grid.variance():.6g} L1(grid, MC)={binned_l1(grid, est, cfg['bins']):.5f}")
    return {"density.csv": grid.to_csv(), "histogram.csv": hist}


_CLOSED_FORM = {
    "linear": lambda n: 2.0 / n,
    "scaled_max": lambda n: (n + 1.0) / n,
    "quadratic_centered": lambda n: 1.0 / (n - 1.0),
}


def cmd_solver(cfg: dict, rng: SeededRng) -> dict[str, str]:
    tag, theta = _family_params(cfg)
    form = cfg["form"] or ("scaled_max" if tag == "one_sided_uniform" else "quadratic_centered")
    try:
        cls = EstimatorClass(tag, form)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    n = cfg["n"]
    data = sample(tag, theta, n, rng.child(0))
    fitted, diag = ple_fit(cls, data, tag, PenaltyConfig(lam=cfg["lam"], k=cfg["k"]), rng.child(1))
    closed = _CLOSED_FORM[form](n) if n > 1 or form != "quadratic_centered" else float("nan")
    row = [
        form, n, repr(cfg["lam"]), cfg["k"], repr(fitted.theta), repr(closed), repr(abs(fitted.theta - closed)),
        repr(diag.constraint.norm), repr(diag.constraint.norm_stderr), diag.converged, repr(diag.objective),
        " ".join(repr(float(v)) for v in fitted.apply(data)),
    ]
    print(f"{form}: theta={fitted.theta:.6f} closed form={closed:.6f} "
          f"|constraint|={diag.constraint.norm:.3g} +- {diag.constraint.norm_stderr:.3g} "
          f"converged={diag.converged}")
    header = ["form", "n", "lam", "k", "theta", "closed_form", "abs_error", "constraint_norm",
              "constraint_stderr", "converged", "objective", "estimate"]
    return {"solver.csv": _csv(header, [row])}


HELP = {
    "bias": "Monte-Carlo versus analytic estimator bias",
    "madness": "self-consuming estimation loop, per-generation mean and stderr",
    "gmm-grid": "EM versus PLE on imbalanced two-component mixtures",
    "density": "estimator density by self-convolution, with a Monte-Carlo overlay",
    "solver": "penalized PLE fit of a one-coefficient estimator class",
}

COMMANDS = {
    "bias": cmd_bias,
    "madness": cmd_madness,
    "gmm-grid": cmd_gmm_grid,
    "density": cmd_density,
    "solver": cmd_solver,
}


# ----------------------------------------------------------------------------- config & manifest


def read_config_file(path) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve(command: str, flags: dict, file_values: dict | None = None) -> dict:
    """Defaults, then config-file values, then flags; every value typed."""
    table = {**OPTIONS[command], **COMMON}
    cfg = {k: o.default for k, o in table.items()}
    for source in (file_values or {}, flags):
        for k, v in source.items():
            if k not in table:
                raise UsageError(f"unknown setting {k!r} for {command}")
            if v is not None:
                try:
                    cfg[k] = table[k].type(v)
                except (TypeError, ValueError):
                    raise UsageError(f"bad value for {k}: {v!r}") from None
    if cfg["seed"] is None:
        cfg["seed"] = int(os.environ.get("PLE_LAB_SEED", "0"))
    missing = [k for k, v in cfg.items() if v is None]
    if missing:
        raise UsageError(f"missing required setting(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")
    return cfg


def _jsonable(cfg: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in cfg.items()}


def execute(command: str, cfg: dict, out_dir: Path) -> dict:
    """Run one subcommand, write its files and the manifest; return the manifest."""
    t0 = time.perf_counter()
    files = COMMANDS[command](cfg, SeededRng(cfg["seed"], 0x5EED))
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        with open(out_dir / name, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    manifest = {
        "subcommand": command,
        "config": _jsonable(cfg),
        "seed": cfg["seed"],
        "version": __version__,
        "outputs": sorted(files),
        "duration_s": round(time.perf_counter() - t0, 3),
    }
    (out_dir / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest


def rerun(manifest_path, out_dir=None) -> dict:
    path = Path(manifest_path)
    man = json.loads(path.read_text(encoding="utf-8"))
    if man.get("version") != __version__:
        log.warning("manifest written by version %s, running %s", man.get("version"), __version__)
    command = man["subcommand"]
    if command not in COMMANDS:
        raise UsageError(f"manifest names unknown subcommand {command!r}")
    cfg = resolve(command, {k: (",".join(map(str, v)) if isinstance(v, list) else v) for k, v in man["config"].items()})
    return execute(command, cfg, Path(out_dir) if out_dir else path.parent)


# ----------------------------------------------------------------------------- argparse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ple-lab", description="PLE versus MLE experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name], description=HELP[name])
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--config", help="key=value settings file (flags override it)")
        for key, opt in {**OPTIONS[name], **COMMON}.items():
            flag = "--" + key.replace("_", "-")
            if key == "svg":
                p.add_argument("--no-svg", dest="svg", action="store_const", const=False, default=None,
                               help="skip SVG output")
            else:
                p.add_argument(flag, dest=key, default=None, metavar=key.upper(), help=opt.help)
    p = sub.add_parser("rerun", help="repeat a run from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, help="output directory (default: the manifest's)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "rerun":
            rerun(args.manifest, args.out)
            return EXIT_OK
        flags = {k: v for k, v in vars(args).items() if k not in ("command", "out", "config", "verbose")}
        file_values = read_config_file(args.config) if args.config else None
        cfg = resolve(args.command, flags, file_values)
        execute(args.command, cfg, Path(args.out))
        return EXIT_OK
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ple-lab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InfeasibleError, InfeasibleCandidateError, TrainingDivergedError) as exc:
        print(f"ple-lab: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (KeyError, ValueError) as exc:
        # bad family/estimator names and domain violations come from user input
        print(f"ple-lab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
