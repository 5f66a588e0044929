"""Experiment drivers behind the command line: error-vs-level study, parametric study, timings.

Every output starts with ``#`` comment lines recording the config hash, the
seeds, the bases and the package version.  Nothing time-dependent is written
except measured timings, so reruns of a config reproduce the files.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
import statistics
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import torch
import yaml

from . import __version__
from .certify import NormConstants, Truth, attach_errors, certify, true_errors, write_certificate
from .formulations import FORMULATIONS, get_formulation
from .loss import KINDS, LossConfig, make_loss, training_grid
from .network import Architecture, load_params, save_params
from .problems import ProblemSpec, get_problem
from .training import TrainConfig, aggregate, train, write_training_log

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration (exit code 1)."""


class NumericalFailure(RuntimeError):
    """A run produced no usable result (exit code 2)."""


FIG1_COLUMNS = ["level", "wError", "wEstError", "PINNError01", "uwError", "EstError", "PINNError10", "MSEError"]
PARAM_COLUMNS = ["NoParam", "mu1", "mu2", "H1Error", "EstH1w", "L2Erroruw", "Estuw"]
BENCH_COLUMNS = ["level", "ultraweak", "weak", "classical", "NN"]

DEFAULTS: dict[str, Any] = {
    "problem": "poisson1d",
    "kind": "wavelet_ultraweak",
    "levels": [3, 4, 5, 6, 8, 10],
    "architecture": {"hidden": [64, 64, 64], "activation": "tanh"},
    "seeds": [0, 1, 2, 3, 4],
    "train": {"max_iters": 300, "max_iters_ultraweak": 300, "optimizer": "lbfgs", "gtol": 1e-10},
    "omega_b": [0.1, 10.0],
    "certify": {"level_offset": 2},
    "params": {"grid": 6},
    "train_params": None,
    "fem_n": 16384,
    "bench": {"levels": [3, 4, 5, 6, 8, 10, 12, 14], "repeats": 20},
    "model": None,
    "output": None,
    "gnuplot": False,
}


# sections given as a whole (a parameter sample is one of grid/file/values, not a mix)
_REPLACE = {"params", "train_params"}
# output-only switches, left out of the config hash
_UNHASHED = {"gnuplot"}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in _REPLACE:
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class ExperimentConfig:
    """Resolved experiment settings; ``raw`` is what gets hashed."""

    raw: dict

    @classmethod
    def from_dict(cls, d: dict | None) -> "ExperimentConfig":
        d = d or {}
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        unknown = set(d) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(_merge(DEFAULTS, d))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                d = yaml.safe_load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        return cls.from_dict(d)

    def override(self, **kw) -> "ExperimentConfig":
        return ExperimentConfig.from_dict(_merge(self.raw, {k: v for k, v in kw.items() if v is not None}))

    def validate(self) -> None:
        r = self.raw
        try:
            self.problem
            if r["kind"] not in KINDS:
                raise ConfigError(f"kind must be one of {KINDS}")
            if not r["levels"] or any(int(j) < 1 for j in r["levels"]):
                raise ConfigError("levels must be a nonempty list of positive integers")
            if not r["seeds"]:
                raise ConfigError("at least one seed required")
            self.arch
            self.train_config("mse")
            if int(r["certify"]["level_offset"]) < 0:
                raise ConfigError("certify.level_offset must be >= 0")
            if self.problem.p > 0:
                self.param_grid()
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None

    # accessors -------------------------------------------------------------

    @property
    def problem(self) -> ProblemSpec:
        try:
            return get_problem(self.raw["problem"])
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None

    @property
    def arch(self) -> Architecture:
        a = self.raw["architecture"]
        return Architecture.default(self.problem.p, tuple(a["hidden"]), a["activation"])

    @property
    def seeds(self) -> list[int]:
        return [int(s) for s in self.raw["seeds"]]

    @property
    def levels(self) -> list[int]:
        return [int(j) for j in self.raw["levels"]]

    @property
    def cert_offset(self) -> int:
        return int(self.raw["certify"]["level_offset"])

    def train_config(self, kind: str) -> TrainConfig:
        t = self.raw["train"]
        iters = t["max_iters_ultraweak"] if kind == "wavelet_ultraweak" else t["max_iters"]
        return TrainConfig(
            restarts=len(self.seeds), max_iters=int(iters), optimizer=t["optimizer"], seeds=self.seeds, gtol=float(t["gtol"])
        )

    def _grid(self, spec) -> np.ndarray:
        prob = self.problem
        if spec is None:
            spec = self.raw["params"]
        if "file" in spec:
            mus = np.loadtxt(spec["file"], delimiter=",", ndmin=2)
        elif "grid" in spec:
            mus = prob.sample_grid(int(spec["grid"]))
        elif "values" in spec:
            mus = np.asarray(spec["values"], dtype=float)
        else:
            raise ConfigError("params needs one of: grid, file, values")
        mus = np.asarray(mus, dtype=float).reshape(-1, prob.p)
        return mus

    def param_grid(self) -> np.ndarray:
        return self._grid(self.raw["params"])

    def train_grid(self) -> np.ndarray:
        return self._grid(self.raw["train_params"])

    def hash(self) -> str:
        hashed = {k: v for k, v in self.raw.items() if k not in _UNHASHED}
        blob = json.dumps(hashed, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def header(self, extra: Sequence[str] = ()) -> list[str]:
        bases = ", ".join(f"{k}=cdf{v.basis_pair[0]}{v.basis_pair[1]}" for k, v in FORMULATIONS.items())
        return [
            f"config_hash {self.hash()}",
            f"seeds {','.join(map(str, self.seeds))}",
            f"basis {bases}",
            f"version wavepinn-{__version__}",
            *extra,
        ]


def _write_table(path: Path, columns: Sequence[str], rows: Sequence[Sequence[Any]], header: Sequence[str]) -> Path:
    """Comma-separated unless the file ends in ``.dat`` (whitespace, as tikz/pgfplots tables)."""
    sep = " " if path.suffix == ".dat" else ","
    fmt = lambda v: v if isinstance(v, str) else (str(v) if isinstance(v, (int, np.integer)) else repr(float(v)))
    with open(path, "w") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write(sep.join(columns) + "\n")
        for r in rows:
            fh.write(sep.join(fmt(v) for v in r) + "\n")
    return path


def _gnuplot(path: Path, x: str, ys: Sequence[str], logscale: str = "y") -> None:
    sep = "' '" if path.suffix == ".dat" else "','"
    lines = [
        f"set datafile separator {sep}",
        f"set logscale {logscale}",
        "set key outside",
        "plot " + ", \\\n     ".join(f"'{path.name}' using '{x}':'{y}' with linespoints title '{y}'" for y in ys),
    ]
    path.with_suffix(".gp").write_text("\n".join(lines) + "\n")


def training_set_size(prob: ProblemSpec, J: int, q: int = 3) -> int:
    return training_grid(prob, J, q).size


# --------------------------------------------------------------------------
# figure 1: errors and bounds over the level


def _variant_errors(cfg: ExperimentConfig, kind: str, J: int, omega_b: float = 10.0) -> dict[str, float]:
    prob = cfg.problem
    truth = Truth(prob, int(cfg.raw["fem_n"]))
    lcfg = LossConfig(kind, prob, J, omega_b=omega_b)
    results = train(cfg.arch, lcfg, cfg.train_config(kind))
    form = lcfg.formulation
    errs, etas = [], []
    for r in results:
        if not r.ok:
            errs.append(math.nan)
            etas.append(math.nan)
            continue
        errs.append(float(true_errors(r.theta, prob, truth, formulation=form)[0, 0]))
        if form is not None:
            etas.append(certify(r.theta, prob, form, J + cfg.cert_offset).records[0].eta)
    out = {"error": aggregate(errs).mean}
    if form is not None:
        out["eta"] = aggregate(etas).mean
    return out


def run_fig1(cfg: ExperimentConfig, out_dir: Path) -> Path:
    """L2 errors (restart means) of the five variants per level, plus the two bounds."""
    prob = cfg.problem
    if prob.exact is None:
        raise ConfigError("fig1 needs a problem with known solution (poisson1d)")
    w01, w10 = cfg.raw["omega_b"]
    rows = []
    for J in cfg.levels:
        row: list[Any] = [J]
        vals = {}
        for name, kind, wb in [
            ("w", "wavelet_weak", 10.0),
            ("p01", "classical", w01),
            ("uw", "wavelet_ultraweak", 10.0),
            ("p10", "classical", w10),
            ("mse", "mse", 10.0),
        ]:
            try:
                vals[name] = _variant_errors(cfg, kind, J, wb)
            except ValueError as exc:  # no finite restart
                log.error("level %d, %s: %s", J, kind, exc)
                vals[name] = {"error": math.nan, "eta": math.nan}
            log.info("level %d %s: %s", J, kind, vals[name])
        row += [
            vals["w"]["error"], vals["w"]["eta"], vals["p01"]["error"], vals["uw"]["error"],
            vals["uw"]["eta"], vals["p10"]["error"], vals["mse"]["error"],
        ]
        rows.append(row)
    sizes = " ".join(f"{J}:{training_set_size(prob, J)}" for J in cfg.levels)
    path = Path(out_dir) / (cfg.raw["output"] or "fig1.csv")
    _write_table(
        path,
        FIG1_COLUMNS,
        rows,
        cfg.header(
            [
                f"problem {prob.name}; errors in L2 (means over restarts); bounds certified at level J+{cfg.cert_offset}",
                f"training points per level {sizes}",
            ]
        ),
    )
    if cfg.raw["gnuplot"]:
        _gnuplot(path, "level", FIG1_COLUMNS[1:])
    return path


# --------------------------------------------------------------------------
# figures 2/3: parametric study


def run_param_study(cfg: ExperimentConfig, out_dir: Path, level: int | None = None) -> Path:
    """One parametric network per formulation; per-parameter error vs FEM truth and bound.

    Parameters are enumerated row-major over the grid (last coordinate fastest),
    numbered from 1.  With several seeds the lowest-loss restart is reported.
    """
    prob = cfg.problem
    if prob.p == 0:
        raise ConfigError("param-study needs a parameterized problem")
    J = level if level is not None else cfg.levels[0]
    mus = cfg.param_grid()
    train_mus = cfg.train_grid()
    truth = Truth(prob, int(cfg.raw["fem_n"]))
    cols = {}
    for form, col in (("weak", 1), ("ultraweak", 0)):
        kind = f"wavelet_{form}"
        results = [r for r in train(cfg.arch, LossConfig(kind, prob, J, mus=train_mus), cfg.train_config(kind)) if r.ok]
        if not results:
            raise NumericalFailure(f"all restarts of the {form} training failed")
        best = min(results, key=lambda r: r.loss)
        cert = certify(best.theta, prob, form, J + cfg.cert_offset, mus)
        err = true_errors(best.theta, prob, truth, mus, formulation=form)[:, col]
        cols[form] = (err, cert.etas())
    rows = [
        [i + 1, *mus[i][:2], cols["weak"][0][i], cols["weak"][1][i], cols["ultraweak"][0][i], cols["ultraweak"][1][i]]
        for i in range(len(mus))
    ]
    path = Path(out_dir) / (cfg.raw["output"] or "param_study.csv")
    _write_table(
        path,
        PARAM_COLUMNS,
        rows,
        cfg.header(
            [
                f"problem {prob.name}; training level {J}; bounds at level {J + cfg.cert_offset}; "
                f"{len(train_mus)} training parameters; truth P1 FEM n={cfg.raw['fem_n']}",
                "H1Error/EstH1w: weak form, L2Erroruw/Estuw: ultra-weak form",
            ]
        ),
    )
    if cfg.raw["gnuplot"]:
        _gnuplot(path, "NoParam", PARAM_COLUMNS[3:])
    return path


# --------------------------------------------------------------------------
# table 1: loss evaluation timings


def bench_losses(prob: ProblemSpec, arch: Architecture, levels: Sequence[int], repeats: int = 20, seed: int = 0) -> list[list[float]]:
    """Median wall time [s] of one loss evaluation per level and loss kind.

    Repeats run round-robin over all (level, kind) cells, so a slow spell of a
    shared CPU spreads over the whole table instead of skewing one entry.
    """
    from .network import init

    theta = init(arch, seed)
    mus = None if prob.p == 0 else prob.sample_grid(2)[:1]
    exact = prob.exact if prob.exact is not None else (lambda x, m=None: np.zeros_like(x))
    kinds = ("wavelet_ultraweak", "wavelet_weak", "classical", "mse")
    fns = {(J, k): make_loss(LossConfig(k, prob, J, mus=mus, exact=exact)) for J in levels for k in kinds}
    ts: dict[tuple, list[float]] = {key: [] for key in fns}
    with torch.no_grad():
        for fn in fns.values():
            fn(theta)  # warm-up: tables, caches
        for _ in range(repeats):
            for key, fn in fns.items():
                t0 = time.perf_counter()
                fn(theta)
                ts[key].append(time.perf_counter() - t0)
    return [[J] + [statistics.median(ts[J, k]) for k in kinds] for J in levels]


def run_bench(cfg: ExperimentConfig, out_dir: Path, levels: Sequence[int] | None = None) -> Path:
    b = cfg.raw["bench"]
    levels = list(levels) if levels else [int(j) for j in b["levels"]]
    rows = bench_losses(cfg.problem, cfg.arch, levels, int(b["repeats"]), cfg.seeds[0])
    path = Path(out_dir) / (cfg.raw["output"] or "bench.csv")
    _write_table(
        path,
        BENCH_COLUMNS,
        rows,
        cfg.header([f"problem {cfg.problem.name}; median seconds per loss evaluation over {b['repeats']} runs; torch threads {torch.get_num_threads()}"]),
    )
    return path


# --------------------------------------------------------------------------
# train / certify


def run_train(cfg: ExperimentConfig, out_dir: Path, level: int | None = None) -> Path:
    """Train ``cfg.kind`` at one level; writes every restart, the best as ``model.wnet``, and the log."""
    prob = cfg.problem
    J = level if level is not None else cfg.levels[0]
    kind = cfg.raw["kind"]
    mus = cfg.train_grid() if prob.p else None
    out_dir = Path(out_dir)
    results = train(cfg.arch, LossConfig(kind, prob, J, mus=mus), cfg.train_config(kind))
    ok = [r for r in results if r.ok]
    write_training_log(out_dir / "training_log.csv", results, cfg.header([f"kind {kind}; level {J}"]))
    if not ok:
        raise NumericalFailure("all restarts failed")
    for r in ok:
        save_params(out_dir / f"model_seed{r.seed}.wnet", r.theta)
    best = min(ok, key=lambda r: r.loss)
    path = out_dir / (cfg.raw["model"] or "model.wnet")
    save_params(path, best.theta)
    return path


def run_certify(cfg: ExperimentConfig, out_dir: Path, level: int | None = None, model: str | None = None) -> Path:
    """Certificate CSV for a stored model; errors are added when a truth is available."""
    prob = cfg.problem
    out_dir = Path(out_dir)
    mpath = Path(model or cfg.raw["model"] or out_dir / "model.wnet")
    if not mpath.exists():
        raise ConfigError(f"model file {mpath} not found")
    theta = load_params(mpath)
    if theta.arch.n_inputs != 1 + prob.p:
        raise ConfigError(f"model has {theta.arch.n_inputs} inputs, problem {prob.name} needs {1 + prob.p}")
    kind = cfg.raw["kind"]
    form = kind.split("_", 1)[1] if kind.startswith("wavelet_") else "weak"
    J = level if level is not None else cfg.levels[0] + cfg.cert_offset
    mus = cfg.param_grid() if prob.p else None
    cert = certify(theta, prob, form, J, mus, NormConstants.estimate(get_formulation(form), J))
    attach_errors(cert, Truth(prob, int(cfg.raw["fem_n"])))
    path = out_dir / (cfg.raw["output"] or "certificate.csv")
    write_certificate(path, cert, cfg.header([f"model {mpath.name}; formulation {form}; certificate level {J}"]))
    return path
