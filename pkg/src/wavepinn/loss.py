"""Training losses: classical PINN, MSE against a known solution, and the wavelet dual-norm loss."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import torch

from .formulations import FORMULATIONS, Assembler, as_model, boundary_residual, classical_residual
from .network import DTYPE, Params, PeriodicLift, ZeroMean
from .problems import ProblemSpec, get_problem
from .splinequad import QuadratureGrid
from .wavelet import CoefficientPyramid, WaveletBasis, _flat_weights, fwt_decompose, fwt_decompose_adjoint, make_basis

KINDS = ("classical", "mse", "wavelet_weak", "wavelet_ultraweak")


@dataclass
class LossConfig:
    """What to minimize.

    ``mus`` is the parameter sample (rows), ``None`` for parameter-free
    problems.  ``sigma`` and ``basis`` default to the formulation table.
    """

    kind: str
    problem: str | ProblemSpec
    J: int
    mus: np.ndarray | None = None
    omega_b: float = 10.0
    q: int = 3
    sigma: float | None = None
    basis: tuple[int, int] | None = None
    truncate_tol: float | None = None
    exact: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {KINDS}")
        if isinstance(self.problem, str):
            self.problem = get_problem(self.problem)
        if self.mus is not None:
            self.mus = np.asarray(self.mus, dtype=float).reshape(-1, self.problem.p)
        elif self.problem.p > 0:
            raise ValueError(f"problem {self.problem.name} needs a parameter sample")
        if self.kind.startswith("wavelet_"):
            form = FORMULATIONS[self.formulation]
            self.sigma = form.sigma if self.sigma is None else self.sigma
            self.basis = form.basis_pair if self.basis is None else tuple(self.basis)
            if self.sigma != form.sigma:
                raise ValueError(f"{self.kind} needs sigma = {form.sigma}, got {self.sigma}")
            if self.kind == "wavelet_ultraweak" and self.basis[0] < 3:
                raise ValueError("ultra-weak loss needs a primal basis of order >= 3")

    @property
    def formulation(self) -> str | None:
        return self.kind.split("_", 1)[1] if self.kind.startswith("wavelet_") else None

    @property
    def wavelet_basis(self) -> WaveletBasis:
        return make_basis(*self.basis)


@lru_cache(maxsize=64)
def training_grid(prob: ProblemSpec, J: int, q: int = 3) -> QuadratureGrid:
    """The shared node set: q Gauss points per level-J cell, split at kinks."""
    return QuadratureGrid.build(J, q, prob.breakpoints)


@lru_cache(maxsize=32)
def _assembler(prob: ProblemSpec, formulation: str, J: int, q: int, basis: tuple[int, int]) -> Assembler:
    return Assembler(prob, formulation, J, q, make_basis(*basis))


def solution_model(prob: ProblemSpec, theta, grid: QuadratureGrid, formulation: str | None = None):
    """The network as a trial function of the given formulation.

    Weak form: lifted to a periodic function (H^1_per); the tested residual
    cannot see a linear drift otherwise.  Zero-mean problems additionally
    get the projector Q.
    """
    model = as_model(theta)
    if formulation == "weak":
        model = PeriodicLift(model)
    if prob.zero_mean:
        model = ZeroMean(model, grid.nodes, grid.weights)
    return model


# --------------------------------------------------------------------------
# FWT as a differentiable torch operation


class _FWT(torch.autograd.Function):
    @staticmethod
    def forward(ctx, c, basis, coarsest):
        ctx.basis, ctx.coarsest = basis, coarsest
        return torch.from_numpy(fwt_decompose(c.detach().numpy(), basis, coarsest).flat())

    @staticmethod
    def backward(ctx, g):
        p = CoefficientPyramid.from_flat(g.detach().numpy(), ctx.coarsest)
        return torch.from_numpy(fwt_decompose_adjoint(p, ctx.basis)), None, None


def torch_fwt(c: torch.Tensor, basis: WaveletBasis, coarsest: int = 0) -> torch.Tensor:
    """Flat pyramid ``(c0, d_0, ..., d_{J-1})`` of single-scale coefficients along the last axis."""
    return _FWT.apply(c, basis, coarsest)


def weighted_sum_torch(flat: torch.Tensor, sigma: float, truncate_tol: float | None = None) -> torch.Tensor:
    J = int(flat.shape[-1]).bit_length() - 1
    w = torch.as_tensor(_flat_weights(J, 0, sigma), dtype=DTYPE)
    if truncate_tol:
        scaled = flat.detach().abs() * w.sqrt()
        keep = scaled >= truncate_tol
        keep[..., 0] = True
        flat = flat * keep
    return (flat * flat * w).sum(-1)


# --------------------------------------------------------------------------
# the four losses


def wavelet_terms(theta, cfg: LossConfig) -> torch.Tensor:
    """Per-parameter weighted sums ``||c0||^2 + sum_l 2^(-2 sigma l) ||d_l||^2`` (shape (m,))."""
    prob = cfg.problem
    asm = _assembler(prob, cfg.formulation, cfg.J, cfg.q, cfg.basis)
    model = solution_model(prob, theta, asm.grid, cfg.formulation)
    c = asm.coefficients(model, cfg.mus)
    return weighted_sum_torch(torch_fwt(c, asm.basis), cfg.sigma, cfg.truncate_tol)


def loss_wavelet(theta, cfg: LossConfig) -> torch.Tensor:
    if not cfg.kind.startswith("wavelet_"):
        raise ValueError(f"loss_wavelet called with kind {cfg.kind!r}")
    return wavelet_terms(theta, cfg).sum()


def loss_classical(theta, cfg: LossConfig) -> torch.Tensor:
    """Squared interior residuals over the nodes plus ``omega_b^2`` times the squared trace residual, per parameter."""
    prob = cfg.problem
    grid = training_grid(prob, cfg.J, cfg.q)
    model = as_model(theta)
    r = classical_residual(prob, model, grid.nodes, cfg.mus)
    rb = boundary_residual(prob, model, cfg.mus)
    return (r * r).sum() + cfg.omega_b**2 * (rb * rb).sum()


def loss_mse(theta, cfg: LossConfig, exact: Callable | None = None) -> torch.Tensor:
    """Mean of ``|u(x) - Phi(x)|^2`` over the node set (and the parameter sample)."""
    prob = cfg.problem
    exact = exact or cfg.exact or prob.exact
    if exact is None:
        raise ValueError(f"no exact solution for {prob.name}; pass one explicitly")
    grid = training_grid(prob, cfg.J, cfg.q)
    u = as_model(theta).jet(grid.nodes, cfg.mus, 0).u
    if cfg.mus is None:
        target = torch.as_tensor(exact(grid.nodes), dtype=DTYPE)
    else:
        target = torch.as_tensor(np.stack([exact(grid.nodes, m) for m in cfg.mus]), dtype=DTYPE)
    return ((u - target) ** 2).mean()


def make_loss(cfg: LossConfig) -> Callable[[Params], torch.Tensor]:
    """Closure ``theta -> loss`` for the configured kind."""
    if cfg.kind == "classical":
        return lambda theta: loss_classical(theta, cfg)
    if cfg.kind == "mse":
        return lambda theta: loss_mse(theta, cfg)
    return lambda theta: loss_wavelet(theta, cfg)
