"""Test problems: periodic Poisson and the parameterized diffusion-reaction family."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

FOUR_PI2 = 4.0 * np.pi**2


@dataclass(frozen=True)
class DiffusionCoefficient:
    """Continuous piecewise affine ``A(x; mu)`` with ``A(i/(p+1)) = mu_i`` and ``mu_0 = mu_{p+1} = 1``."""

    p: int = 2

    @property
    def breakpoints(self) -> np.ndarray:
        return np.arange(self.p + 2) / (self.p + 1)

    def _nodal(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float).reshape(-1)
        if mu.size != self.p:
            raise ValueError(f"expected {self.p} parameters, got {mu.size}")
        return np.concatenate([[1.0], mu, [1.0]])

    def __call__(self, x, mu) -> np.ndarray:
        x = np.mod(np.asarray(x, dtype=float), 1.0)
        return np.interp(x, self.breakpoints, self._nodal(mu))

    def slope(self, x, mu) -> np.ndarray:
        """Piecewise constant derivative, right-continuous at the breakpoints."""
        x = np.mod(np.asarray(x, dtype=float), 1.0)
        xi, v = self.breakpoints, self._nodal(mu)
        i = np.clip(np.searchsorted(xi, x, side="right") - 1, 0, self.p)
        return (v[i + 1] - v[i]) / (xi[i + 1] - xi[i])

    def sup(self, mu) -> float:
        return float(np.max(self._nodal(mu)))


def _rhs(x):
    return FOUR_PI2 * np.cos(2.0 * np.pi * np.asarray(x, dtype=float))


def _cos_exact(x):
    return np.cos(2.0 * np.pi * np.asarray(x, dtype=float))


def _cos_exact_dx(x):
    return -2.0 * np.pi * np.sin(2.0 * np.pi * np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """``-(A u')' + c u = f`` on the unit circle, ``c`` in {0, 1}.

    ``zero_mean`` marks problems whose solution is only fixed up to constants;
    the network output is then projected onto mean-zero functions.
    """

    name: str
    operator: str
    p: int
    rhs: Callable[[np.ndarray], np.ndarray]
    exact: Callable[[np.ndarray], np.ndarray] | None = None
    exact_dx: Callable[[np.ndarray], np.ndarray] | None = None
    coefficient: DiffusionCoefficient | None = None
    box: np.ndarray | None = None
    zero_mean: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def reaction(self) -> float:
        return 1.0 if self.operator == "diffusion_reaction" else 0.0

    @property
    def breakpoints(self) -> tuple[float, ...]:
        if self.coefficient is None:
            return ()
        return tuple(self.coefficient.breakpoints[1:-1])

    def A(self, x, mu=None) -> np.ndarray:
        if self.coefficient is None:
            return np.ones_like(np.asarray(x, dtype=float))
        return self.coefficient(x, mu)

    def dA(self, x, mu=None) -> np.ndarray:
        if self.coefficient is None:
            return np.zeros_like(np.asarray(x, dtype=float))
        return self.coefficient.slope(x, mu)

    def alpha(self, mu=None) -> float:
        """Coercivity constant of the weak form in the full H^1 norm."""
        if self.operator == "poisson":
            # Poincare on mean-zero periodic functions
            return FOUR_PI2 / (1.0 + FOUR_PI2)
        return alpha(mu, self.box)

    def continuity(self, mu=None) -> float:
        """``C(mu) = max(||A(mu)||_inf, 1)``."""
        if self.coefficient is None:
            return 1.0
        return max(self.coefficient.sup(mu), 1.0)

    def sample_grid(self, n_per_axis: int) -> np.ndarray:
        """Tensor grid over the parameter box, enumerated row-major (last axis fastest)."""
        if self.p == 0:
            return np.zeros((1, 0))
        axes = [np.linspace(lo, hi, n_per_axis) for lo, hi in self.box]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.p)


def coefficient_A(x, mu, p: int = 2) -> np.ndarray:
    return DiffusionCoefficient(p)(x, mu)


def coefficient_slope(x, mu, p: int = 2) -> np.ndarray:
    return DiffusionCoefficient(p).slope(x, mu)


def alpha(mu, box=None) -> float:
    """``min(mu_1, ..., mu_p, 1)``."""
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if box is not None:
        box = np.asarray(box)
        if np.any(mu < box[:, 0]) or np.any(mu > box[:, 1]):
            log.warning("parameter %s outside the parameter box; bound still computed", mu)
    return float(min(np.min(mu), 1.0))


POISSON = ProblemSpec(
    name="poisson1d",
    operator="poisson",
    p=0,
    rhs=_rhs,
    exact=_cos_exact,
    exact_dx=_cos_exact_dx,
    zero_mean=True,
)

DIFFUSION_REACTION = ProblemSpec(
    name="diffusion_reaction",
    operator="diffusion_reaction",
    p=2,
    rhs=_rhs,
    coefficient=DiffusionCoefficient(2),
    box=np.array([[0.125, 2.0], [0.125, 2.0]]),
)

PROBLEMS = {POISSON.name: POISSON, DIFFUSION_REACTION.name: DIFFUSION_REACTION}


def get_problem(name: str) -> ProblemSpec:
    try:
        return PROBLEMS[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; known: {sorted(PROBLEMS)}") from None


def manufactured(problem_id: str, x):
    """``(f(x), u_exact(x))``; the exact solution is ``None`` where only FEM truth exists."""
    prob = get_problem(problem_id)
    return prob.rhs(x), (None if prob.exact is None else prob.exact(x))
