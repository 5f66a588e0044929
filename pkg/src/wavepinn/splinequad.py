"""Cardinal B-splines, periodized scaling functions/wavelets and composite Gauss rules."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .wavelet import WaveletBasis


def bspline_eval(d: int, r: int, x) -> np.ndarray:
    """r-th derivative of the order-``d`` cardinal B-spline supported on ``[0, d]``.

    Cox-de Boor recursion.  Derivatives of order ``d - 1`` are piecewise
    constant and are returned as right limits at the knots.
    """
    if d < 1:
        raise ValueError("order must be >= 1")
    if r < 0 or r > d - 1:
        raise ValueError(f"derivative order {r} too large for B-spline of order {d}")
    x = np.asarray(x, dtype=float)
    if r > 0:
        return bspline_eval(d - 1, r - 1, x) - bspline_eval(d - 1, r - 1, x - 1.0)
    return _bspline_value(d, x)


def _bspline_value(d: int, x: np.ndarray) -> np.ndarray:
    if d == 1:
        return ((x >= 0.0) & (x < 1.0)).astype(float)
    return (x * _bspline_value(d - 1, x) + (d - x) * _bspline_value(d - 1, x - 1.0)) / (d - 1)


def wavelet_eval(basis: WaveletBasis, r: int, y) -> np.ndarray:
    """r-th derivative of the primal mother wavelet ``psi = sum_k b_k phi(2 . - k)``."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    for k, c in zip(basis.b.indices, basis.b.coeffs):
        out += c * bspline_eval(basis.d, r, 2.0 * y - k)
    return out * 2.0**r


@dataclass(frozen=True, eq=False)
class PeriodizedFunction:
    """``g_{j,k} = sum_m 2^{j/2} g(2^j (. - m) - k)`` restricted to [0, 1)."""

    basis: WaveletBasis
    level: int
    shift: int
    kind: str = "scaling"  # or "wavelet"
    side: str = "primal"

    def __post_init__(self):
        if self.kind not in ("scaling", "wavelet"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.side not in ("primal", "dual"):
            raise ValueError(f"unknown side {self.side!r}")
        if not 0 <= self.shift < 2**self.level:
            raise ValueError(f"shift {self.shift} outside 0..{2**self.level - 1}")

    def support(self) -> tuple[float, float]:
        lo, hi = self.basis.support(self.kind, self.side)
        return (lo + self.shift) / 2**self.level, (hi + self.shift) / 2**self.level

    @property
    def knot_level(self) -> int:
        """Finest dyadic level on which the function is a polynomial per cell."""
        return self.level + (1 if self.kind == "wavelet" else 0)

    def cells(self) -> np.ndarray:
        """Indices of the level-``knot_level`` cells in [0, 1) meeting the support."""
        L = self.knot_level
        lo, hi = self.support()
        first = int(np.floor(lo * 2**L))
        last = int(np.ceil(hi * 2**L)) - 1
        return np.unique(np.arange(first, last + 1) % 2**L)


def periodized_eval(f: PeriodizedFunction, x, r: int = 0) -> np.ndarray:
    """Evaluate the r-th derivative of a primal periodized function at ``x``."""
    if f.side != "primal":
        raise ValueError("dual functions have no closed form; use spectral.cascade_values")
    x = np.asarray(x, dtype=float)
    j, k = f.level, f.shift
    scale = 2.0**j
    y = scale * x - k
    lo, hi = f.basis.support(f.kind, "primal")
    m_lo = int(np.floor((np.min(y, initial=0.0) - hi) / scale))
    m_hi = int(np.ceil((np.max(y, initial=0.0) - lo) / scale))
    base = (lambda t: bspline_eval(f.basis.d, r, t)) if f.kind == "scaling" else (
        lambda t: wavelet_eval(f.basis, r, t)
    )
    out = np.zeros_like(y)
    for m in range(m_lo, m_hi + 1):
        t = y - scale * m
        inside = (t >= lo) & (t <= hi)
        if np.any(inside):
            out[inside] += base(t[inside])
    return out * 2.0 ** (j / 2 + j * r)


# --------------------------------------------------------------------------
# quadrature


@lru_cache(maxsize=None)
def _gauss(q: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(q)


def gauss_rule(q: int, a, b) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of q-point Gauss-Legendre rules on the intervals (a_i, b_i)."""
    t, w = _gauss(q)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return (mid[:, None] + half[:, None] * t).ravel(), (half[:, None] * w).ravel()


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Composite Gauss rule on the ``2**J`` dyadic cells of [0, 1).

    Cells containing a non-dyadic breakpoint are split there into two panels.
    ``cell[i]`` is the dyadic cell that node ``i`` belongs to.
    """

    J: int
    q: int
    nodes: np.ndarray
    weights: np.ndarray
    cell: np.ndarray

    @classmethod
    def build(cls, J: int, q: int = 3, breakpoints: Sequence[float] = ()) -> "QuadratureGrid":
        n = 2**J
        edges = [[m / n, (m + 1) / n] for m in range(n)]
        for xi in breakpoints:
            xi = float(xi) % 1.0
            m = int(np.floor(xi * n))
            if m / n < xi < (m + 1) / n:
                edges[m] = sorted(set(edges[m]) | {xi})
        a, b, owner = [], [], []
        for m, e in enumerate(edges):
            a.extend(e[:-1])
            b.extend(e[1:])
            owner.extend([m] * (len(e) - 1))
        nodes, weights = gauss_rule(q, a, b)
        return cls(J, q, nodes, weights, np.repeat(owner, q))

    @property
    def size(self) -> int:
        return len(self.nodes)

    def integrate(self, values) -> np.ndarray:
        return np.asarray(values) @ self.weights


@dataclass(frozen=True, eq=False)
class ScalingTable:
    """Sparse action ``g -> ((g, phi^{(r)}_{J,k}))_k`` on a quadrature grid.

    ``index[i, t]`` and ``value[i, t]`` list, for node ``i``, the ``d`` scaling
    functions not vanishing there and ``weight_i * phi^{(r)}_{J,k}(x_i)``.
    """

    J: int
    r: int
    index: np.ndarray
    value: np.ndarray

    def apply(self, g: np.ndarray) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        out = np.zeros(g.shape[:-1] + (2**self.J,))
        contrib = g[..., :, None] * self.value
        flat = contrib.reshape(g.shape[:-1] + (-1,))
        idx = self.index.ravel()
        for pos in np.ndindex(*g.shape[:-1]):
            out[pos] = np.bincount(idx, weights=flat[pos], minlength=2**self.J)
        return out


def scaling_table(grid: QuadratureGrid, basis: WaveletBasis, r: int = 0, J: int | None = None) -> ScalingTable:
    """Table for the primal scaling functions of level ``J`` (default: the grid level)."""
    J = grid.J if J is None else J
    if J > grid.J:
        raise ValueError("scaling level finer than the quadrature grid")
    d = basis.d
    y = grid.nodes * 2**J
    m = np.floor(y).astype(int)
    ks = m[:, None] - np.arange(d)[None, :]
    t = y[:, None] - ks
    vals = bspline_eval(d, r, t) * 2.0 ** (J / 2 + J * r) * grid.weights[:, None]
    return ScalingTable(J, r, ks % 2**J, vals)


def inner_product(
    g: Callable[[np.ndarray], np.ndarray],
    f: PeriodizedFunction,
    r: int = 0,
    q: int = 3,
    breakpoints: Sequence[float] = (),
) -> float:
    """``(g, f^{(r)})_{L2(0,1)}`` by q-point Gauss on the cells of f's support."""
    if q < 1:
        raise ValueError("need at least one Gauss point per cell")
    L = f.knot_level
    cells = f.cells()
    a, b = cells / 2**L, (cells + 1) / 2**L
    pieces_a, pieces_b = [], []
    for lo, hi in zip(a, b):
        cuts = sorted({lo, hi} | {xi % 1.0 for xi in breakpoints if lo < xi % 1.0 < hi})
        pieces_a.extend(cuts[:-1])
        pieces_b.extend(cuts[1:])
    x, w = gauss_rule(q, pieces_a, pieces_b)
    return float(np.sum(w * np.asarray(g(x), dtype=float) * periodized_eval(f, x, r)))


def single_scale_coeffs(
    g: Callable[[np.ndarray], np.ndarray],
    J: int,
    basis: WaveletBasis,
    q: int = 3,
    r: int = 0,
    breakpoints: Sequence[float] = (),
) -> np.ndarray:
    """All ``(g, phi^{(r)}_{J,k})``, k = 0..2^J-1, sharing one set of samples of g."""
    grid = QuadratureGrid.build(J, q, breakpoints)
    return scaling_table(grid, basis, r).apply(np.asarray(g(grid.nodes), dtype=float))
