"""Residuals of the classical, weak and ultra-weak formulations.

The per-point functions mirror the definitions one by one and are what the
tests check against.  :class:`Assembler` produces the same single-scale
coefficients for a whole level at once (sparse tables on a shared quadrature
grid) and is what the wavelet losses call.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

from .network import DTYPE, Jet2, Network, Params
from .problems import ProblemSpec
from .splinequad import PeriodizedFunction, QuadratureGrid, gauss_rule, periodized_eval, scaling_table
from .wavelet import WaveletBasis, make_basis

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Formulation:
    name: str
    sigma: int
    basis_pair: tuple[int, int]
    error_norm: str  # norm in which the bound controls the error

    @property
    def basis(self) -> WaveletBasis:
        return make_basis(*self.basis_pair)


FORMULATIONS = {
    "weak": Formulation("weak", 1, (2, 2), "H1"),
    "ultraweak": Formulation("ultraweak", 2, (4, 4), "L2"),
}


def get_formulation(name: str) -> Formulation:
    try:
        return FORMULATIONS[name]
    except KeyError:
        raise KeyError(f"unknown formulation {name!r}; known: {sorted(FORMULATIONS)}") from None


def as_model(net):
    return Network(net) if isinstance(net, Params) else net


def _t(a) -> torch.Tensor:
    return torch.as_tensor(np.asarray(a, dtype=float), dtype=DTYPE)


def coefficient_arrays(prob: ProblemSpec, x, mu=None) -> tuple[np.ndarray, np.ndarray]:
    """``A`` and ``A'`` at ``x``; shape (n,) for one parameter, (m, n) for a stack."""
    x = np.asarray(x, dtype=float)
    if mu is not None and np.ndim(mu) == 2:
        return (np.stack([prob.A(x, m) for m in mu]), np.stack([prob.dA(x, m) for m in mu]))
    return prob.A(x, mu), prob.dA(x, mu)


def _warn_kinks(prob: ProblemSpec, x) -> None:
    x = np.atleast_1d(np.asarray(x, dtype=float)) % 1.0
    for xi in prob.breakpoints:
        if np.any(np.abs(x - xi) < 1e-14):
            log.info("residual evaluated at kink %.6f of A; right-limit slope used", xi)


def _strong_residual(prob: ProblemSpec, jet: Jet2, f, A, dA) -> torch.Tensor:
    if prob.operator == "poisson":
        return f + jet.uxx
    return f + (A * jet.uxx + dA * jet.ux) - prob.reaction * jet.u


def classical_residual(prob: ProblemSpec, net, x, mu=None) -> torch.Tensor:
    """``f(x) - (B u)(x)`` with ``B u = -(A u')' + c u`` expanded by the product rule."""
    _warn_kinks(prob, x)
    jet = as_model(net).jet(np.atleast_1d(x), mu, 2)
    A, dA = coefficient_arrays(prob, np.atleast_1d(x), mu)
    return _strong_residual(prob, jet, _t(prob.rhs(np.atleast_1d(x))), _t(A), _t(dA))


def boundary_residual(prob: ProblemSpec, net, mu=None) -> torch.Tensor:
    """Periodic trace residual ``(u(0) - u(1), u'(0) - u'(1))`` in the last axis."""
    jet = as_model(net).jet(np.array([0.0, 1.0]), mu, 1)
    return torch.stack([jet.u[..., 0] - jet.u[..., 1], jet.ux[..., 0] - jet.ux[..., 1]], dim=-1)


def _test_nodes(test: PeriodizedFunction, q: int, breakpoints) -> tuple[np.ndarray, np.ndarray]:
    L = test.knot_level
    pa, pb = [], []
    for c in test.cells():
        lo, hi = c / 2**L, (c + 1) / 2**L
        cuts = sorted({lo, hi} | {xi % 1.0 for xi in breakpoints if lo < xi % 1.0 < hi})
        pa.extend(cuts[:-1])
        pb.extend(cuts[1:])
    return gauss_rule(q, pa, pb)


def weak_tested_residual(prob: ProblemSpec, net, mu, test: PeriodizedFunction, q: int = 3) -> torch.Tensor:
    """``(f, v) - (A Phi', v') - c (Phi, v)`` by Gauss quadrature on the cells of v."""
    x, w = _test_nodes(test, q, prob.breakpoints)
    jet = as_model(net).jet(x, mu, 1)
    A, _ = coefficient_arrays(prob, x, mu)
    v, dv = periodized_eval(test, x, 0), periodized_eval(test, x, 1)
    fv = float(np.sum(w * prob.rhs(x) * v))
    return fv - (jet.ux * _t(A * w * dv)).sum(-1) - prob.reaction * (jet.u * _t(w * v)).sum(-1)


def apply_adjoint(prob: ProblemSpec, mu, test: PeriodizedFunction, x) -> np.ndarray:
    """``B* v = -A v'' - A' v' + c v`` (``-v''`` for the Poisson operator)."""
    if test.basis.d < 3:
        raise ValueError(f"test function of order {test.basis.d} has no square-integrable second derivative")
    x = np.asarray(x, dtype=float)
    v2 = periodized_eval(test, x, 2)
    if prob.operator == "poisson":
        return -v2
    A, dA = prob.A(x, mu), prob.dA(x, mu)
    return -A * v2 - dA * periodized_eval(test, x, 1) + prob.reaction * periodized_eval(test, x, 0)


def ultraweak_coeff(
    prob: ProblemSpec, net, mu, J: int, k: int, basis: WaveletBasis | None = None, q: int = 3
) -> torch.Tensor:
    """``(f, phi_{J,k}) - (Phi, B* phi_{J,k})``; the network is only evaluated, never differentiated."""
    basis = basis or FORMULATIONS["ultraweak"].basis
    test = PeriodizedFunction(basis, J, k)
    x, w = _test_nodes(test, q, prob.breakpoints)
    u = as_model(net).jet(x, mu, 0).u
    fv = float(np.sum(w * prob.rhs(x) * periodized_eval(test, x, 0)))
    return fv - (u * _t(w * apply_adjoint(prob, mu, test, x))).sum(-1)


# --------------------------------------------------------------------------
# level-wide assembly


class Assembler:
    """Single-scale residual coefficients ``c_{J,k}``, k = 0..2^J-1, for a parameter stack.

    All tests share one composite Gauss grid (``q`` points per dyadic cell,
    cells split at the kinks of A).  Values are returned as torch tensors of
    shape ``(m, 2^J)`` so that gradients flow back into the network.
    """

    def __init__(self, prob: ProblemSpec, formulation: str | Formulation, J: int, q: int = 3, basis: WaveletBasis | None = None):
        self.prob = prob
        self.form = get_formulation(formulation) if isinstance(formulation, str) else formulation
        self.basis = basis or self.form.basis
        if self.form.name == "ultraweak" and self.basis.d < 3:
            raise ValueError("ultra-weak assembly needs test functions with two derivatives")
        self.J = J
        self.grid = QuadratureGrid.build(J, q, prob.breakpoints)
        t0 = scaling_table(self.grid, self.basis, 0)
        t1 = scaling_table(self.grid, self.basis, 1)
        self.index = torch.as_tensor(t0.index.reshape(-1), dtype=torch.long)
        self.T0, self.T1 = _t(t0.value), _t(t1.value)
        self.T2 = _t(scaling_table(self.grid, self.basis, 2).value) if self.form.name == "ultraweak" else None
        self.Pf = _t(t0.apply(prob.rhs(self.grid.nodes)))
        self.nodes = self.grid.nodes

    def coefficient_arrays(self, mus: np.ndarray | None):
        if mus is None or self.prob.coefficient is None:
            n = len(self.nodes)
            m = 1 if mus is None else len(mus)
            return torch.ones(m, n, dtype=DTYPE), torch.zeros(m, n, dtype=DTYPE)
        A, dA = coefficient_arrays(self.prob, self.nodes, np.asarray(mus, dtype=float).reshape(len(mus), -1))
        return _t(A), _t(dA)

    def _scatter(self, node_vals: torch.Tensor, table: torch.Tensor) -> torch.Tensor:
        # node_vals (m, n) or (m, n, d) against table (n, d) -> (m, 2^J)
        contrib = (node_vals[..., None] * table if node_vals.ndim == 2 else node_vals * table).reshape(node_vals.shape[0], -1)
        out = torch.zeros(node_vals.shape[0], 2**self.J, dtype=DTYPE)
        return out.index_add(1, self.index, contrib)

    def coefficients(self, model, mus=None, coef=None) -> torch.Tensor:
        """``c_{J,k}(r)`` for every parameter row of ``mus`` (None for parameter-free problems)."""
        mu_in = None if mus is None else np.asarray(mus, dtype=float).reshape(len(mus), -1)
        A, dA = coef if coef is not None else self.coefficient_arrays(mu_in)
        if mu_in is None:
            jet = model.jet(self.nodes, None, 1 if self.form.name == "weak" else 0)
            jet = Jet2(*(None if t is None else t[None] for t in jet))
        else:
            jet = model.jet(self.nodes, mu_in, 1 if self.form.name == "weak" else 0)
        c = self.prob.reaction
        if self.form.name == "weak":
            r = self.Pf - self._scatter(A * jet.ux, self.T1)
            if c:
                r = r - c * self._scatter(jet.u, self.T0)
            return r
        # B* phi at the nodes, per parameter: -A phi'' - A' phi' + c phi
        if self.prob.operator == "poisson":
            bstar = -self.T2[None]
        else:
            bstar = -A[..., None] * self.T2 - dA[..., None] * self.T1 + c * self.T0
        return self.Pf - self._scatter(jet.u[..., None] * bstar, torch.ones(1, dtype=DTYPE))
