"""Deterministic full-gradient training with restarts."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from .loss import LossConfig, make_loss
from .network import Architecture, Params, init

log = logging.getLogger(__name__)


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    """Optimizer settings; ``seeds`` defaults to ``0..restarts-1``."""

    restarts: int = 5
    max_iters: int = 500
    optimizer: str = "lbfgs"
    seeds: Sequence[int] | None = None
    gtol: float = 1e-10
    history: int = 10
    max_line_search: int = 25
    lr: float | None = None

    def __post_init__(self):
        if self.seeds is None:
            self.seeds = list(range(self.restarts))
        self.seeds = [int(s) for s in self.seeds]
        if len(self.seeds) != self.restarts:
            raise ValueError(f"{self.restarts} restarts but {len(self.seeds)} seeds")
        if self.max_iters <= 0:
            raise ValueError("max_iters must be positive")
        if self.optimizer not in ("lbfgs", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class LogEntry:
    iter: int
    loss: float
    grad_norm: float
    wall_ms: float


@dataclass
class RestartResult:
    seed: int
    theta: Params
    loss: float
    history: list[LogEntry] = field(default_factory=list)
    status: str = "ok"  # or "aborted: ..."

    @property
    def ok(self) -> bool:
        return self.status == "ok"


class _Objective:
    """Loss + gradient, memoized on the parameter values.

    torch's L-BFGS re-evaluates the closure at the start of every ``step``;
    with one iteration per step that point was already evaluated by the line
    search, so the cached value is returned.
    """

    def __init__(self, arch: Architecture, tensors: list[torch.Tensor], loss_fn):
        self.arch = arch
        self.tensors = tensors
        self.loss_fn = loss_fn
        self._key: torch.Tensor | None = None
        self._val: torch.Tensor | None = None
        self._grads: list[torch.Tensor] | None = None
        self.evals = 0

    def _flat(self) -> torch.Tensor:
        return torch.cat([t.detach().reshape(-1) for t in self.tensors])

    def __call__(self) -> torch.Tensor:
        key = self._flat()
        if self._key is not None and torch.equal(key, self._key):
            for t, g in zip(self.tensors, self._grads):
                t.grad = g.clone()
            return self._val
        for t in self.tensors:
            t.grad = None
        val = self.loss_fn(Params.from_tensors(self.arch, self.tensors))
        self.evals += 1
        if val.requires_grad:
            val.backward()
        for t in self.tensors:
            if t.grad is None:
                t.grad = torch.zeros_like(t)
        val = val.detach()
        if not math.isfinite(float(val)) or not all(torch.isfinite(t.grad).all() for t in self.tensors):
            raise NonFiniteLoss(f"non-finite loss or gradient after {self.evals} evaluations")
        self._key, self._val = key, val
        self._grads = [t.grad.clone() for t in self.tensors]
        return val

    def grad_norm(self) -> float:
        return float(torch.sqrt(sum((g * g).sum() for g in self._grads)))


def optimize(theta0: Params, loss_fn: Callable[[Params], torch.Tensor], cfg: TrainConfig) -> tuple[Params, list[LogEntry]]:
    """Minimize ``loss_fn`` from ``theta0`` for at most ``cfg.max_iters`` iterations.

    Raises :class:`NonFiniteLoss` if the loss or its gradient stops being finite.
    """
    ts = [t.detach().clone().requires_grad_(True) for t in theta0.tensors()]
    obj = _Objective(theta0.arch, ts, loss_fn)
    if cfg.optimizer == "lbfgs":
        opt = torch.optim.LBFGS(
            ts,
            lr=1.0 if cfg.lr is None else cfg.lr,
            max_iter=1,
            # default max_eval would leave the line search no evaluations
            max_eval=1 + cfg.max_line_search,
            history_size=cfg.history,
            line_search_fn="strong_wolfe",
            tolerance_grad=cfg.gtol,
            tolerance_change=0.0,
        )
    else:
        opt = torch.optim.Adam(ts, lr=1e-3 if cfg.lr is None else cfg.lr)
    t0 = time.perf_counter()
    val = obj()
    history = [LogEntry(0, float(val), obj.grad_norm(), 0.0)]
    for it in range(1, cfg.max_iters + 1):
        if history[-1].grad_norm <= cfg.gtol:
            break
        if cfg.optimizer == "lbfgs":
            opt.step(obj)
        else:
            opt.zero_grad()
            obj()
            opt.step()
        val = obj()
        history.append(LogEntry(it, float(val), obj.grad_norm(), 1e3 * (time.perf_counter() - t0)))
    theta = Params.from_tensors(theta0.arch, [t.detach().clone() for t in ts])
    return theta, history


def train(
    arch: Architecture,
    loss_cfg: LossConfig | Callable[[Params], torch.Tensor],
    train_cfg: TrainConfig,
) -> list[RestartResult]:
    """One optimization per seed; a restart that blows up is reported, not fatal."""
    loss_fn = make_loss(loss_cfg) if isinstance(loss_cfg, LossConfig) else loss_cfg
    results = []
    for seed in train_cfg.seeds:
        theta0 = init(arch, seed)
        try:
            theta, hist = optimize(theta0, loss_fn, train_cfg)
            results.append(RestartResult(seed, theta, hist[-1].loss, hist))
        except NonFiniteLoss as exc:
            log.warning("restart with seed %d aborted: %s", seed, exc)
            results.append(RestartResult(seed, theta0, math.nan, [], f"aborted: {exc}"))
    return results


@dataclass(frozen=True)
class Aggregate:
    mean: float
    min: float
    max: float
    n: int


def aggregate(values: Sequence[float]) -> Aggregate:
    """Mean, min and max over restarts; NaN entries (aborted restarts) are skipped."""
    v = np.asarray(list(values), dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        raise ValueError("no finite restart results to aggregate")
    return Aggregate(float(v.mean()), float(v.min()), float(v.max()), int(v.size))


def write_training_log(path, results: Sequence[RestartResult], header: Sequence[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        wr = csv.writer(fh)
        wr.writerow(["restart", "iter", "loss", "grad_norm", "wall_ms"])
        for i, r in enumerate(results):
            for e in r.history:
                wr.writerow([i, e.iter, repr(e.loss), repr(e.grad_norm), f"{e.wall_ms:.3f}"])
