"""Fourier oracles for periodic Sobolev norms and a fine-grid periodic FEM truth.

Nothing here is used inside the training loop.  The ``H^sigma_per`` norm
convention throughout the package is ``sum_k (1 + (2 pi k)^2)^sigma |g_k|^2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicSpline

from .problems import ProblemSpec
from .splinequad import gauss_rule
from .wavelet import CoefficientPyramid, Mask, WaveletBasis, _default_nmax, fwt_reconstruct, scaling_fourier


class CascadeError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of a 1-periodic function at ``i/n``, i = 0..n-1."""

    values: np.ndarray

    def __post_init__(self):
        n = len(self.values)
        if n < 1 or n & (n - 1):
            raise ValueError(f"grid size {n} is not a power of two")

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n) / self.n

    @classmethod
    def sample(cls, g, n: int) -> "GridFunction":
        return cls(np.asarray(g(np.arange(n) / n), dtype=float))

    def closed(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and values including the duplicated endpoint x = 1."""
        return np.append(self.x, 1.0), np.append(self.values, self.values[0])

    def interpolant(self) -> CubicSpline:
        x, v = self.closed()
        return CubicSpline(x, v, bc_type="periodic")

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.x, self.values]), delimiter=",", header="x,value", comments="")


def fourier_coefficients(g: GridFunction) -> np.ndarray:
    """``g_k ~ int g exp(-2 pi i k x)`` for k in fft order."""
    return np.fft.fft(g.values) / g.n


def sobolev_norm(g: GridFunction, sigma: float) -> float:
    if g.n < 4:
        raise ValueError("need at least 4 samples")
    c = fourier_coefficients(g)
    k = np.fft.fftfreq(g.n, 1.0 / g.n)
    keep = np.abs(k) < g.n / 2
    w = (1.0 + (2.0 * np.pi * k[keep]) ** 2) ** sigma
    return float(np.sqrt(np.sum(w * np.abs(c[keep]) ** 2)))


def dual_expansion_norm(
    p: CoefficientPyramid, basis: WaveletBasis, sigma: float, n_max: int | None = None
) -> float:
    """``||c0 phi~_{j0} + sum d_jk psi~_jk||_{H^sigma}`` from the Fourier series of the expansion.

    Goes through single-scale coefficients (inverse FWT) and the Fourier
    transform of the dual scaling function; frequencies ``|n| <= n_max``.
    """
    c = fwt_reconstruct(p, basis)
    J = p.J
    n_max = _default_nmax(J) if n_max is None else n_max
    n = np.arange(0, n_max + 1)
    C = np.fft.fft(c)[n % 2**J]
    hat = 2.0 ** (-J / 2) * scaling_fourier(basis, 2 * np.pi * n / 2**J) * C
    w = np.where(n == 0, 1.0, 2.0) * (1.0 + (2.0 * np.pi * n) ** 2) ** sigma
    return float(np.sqrt(np.sum(w * np.abs(hat) ** 2)))


# --------------------------------------------------------------------------
# cascade algorithm


@dataclass(frozen=True)
class DyadicSamples:
    """Values at ``x = (start + i) / 2**depth`` on the support of a mother function."""

    x: np.ndarray
    values: np.ndarray
    depth: int
    residual: float


def _refine(v: Mask, m: Mask, stride: int) -> Mask:
    """Samples on a grid of width h -> width h/2, given phi = sum m_k phi(2 . - k); ``stride = 1/h``."""
    up = np.zeros(stride * (len(m.coeffs) - 1) + 1)
    up[::stride] = m.coeffs
    return Mask(np.convolve(v.coeffs, up), v.start + stride * m.start)


def cascade_values(
    basis: WaveletBasis,
    side: str = "primal",
    kind: str = "scaling",
    depth: int = 12,
    tol: float = 1e-8,
    max_iter: int = 200,
    strict: bool = True,
) -> DyadicSamples:
    """Point values of phi, phi~, psi or psi~ on the dyadic grid ``2**-depth``.

    The two-scale relation restricted to the integers is iterated from the
    unit impulse until successive iterates differ by less than ``tol`` (max
    norm); the integer values are then refined exactly by subdivision.  Rough
    duals have no bounded integer values and the iteration does not settle:
    with ``strict`` this raises :class:`CascadeError`, otherwise the last
    iterate is refined anyway (partition of unity still holds).
    """
    m = basis.a if side == "primal" else basis.at
    steps = depth if kind == "scaling" else depth - 1
    if steps < 0:
        raise ValueError("depth too small")
    ks = np.arange(m.start, m.stop + 1)
    M = np.array([[m[2 * i - k] for k in ks] for i in ks])
    v = np.zeros(len(ks))
    v[len(ks) // 2] = 1.0
    residual = np.inf
    for _ in range(max_iter):
        w = M @ v
        residual = float(np.max(np.abs(w - v)))
        v = w
        if residual < tol:
            break
    if strict and not residual < tol:
        raise CascadeError(
            f"cascade for {basis.name} {side} {kind} did not converge: residual {residual:.3e} > {tol:g}"
        )
    vals = Mask(v, m.start)
    for n in range(steps):
        vals = _refine(vals, m, 2**n)
    if kind == "wavelet":
        hi = basis.b if side == "primal" else basis.bt
        scale = 2**steps
        out = np.zeros((hi.stop - hi.start) * scale + len(vals.coeffs))
        for t, c in enumerate(hi.coeffs):
            out[t * scale : t * scale + len(vals.coeffs)] += c * vals.coeffs
        vals = Mask(out, hi.start * scale + vals.start)
    x = (vals.start + np.arange(len(vals.coeffs))) / 2**depth
    return DyadicSamples(x, vals.coeffs.copy(), depth, residual)


# --------------------------------------------------------------------------
# reference solver


def fem_reference(problem: ProblemSpec, mu=None, n: int = 2**14) -> GridFunction:
    """Periodic P1 finite elements for ``(A u', v') + c (u, v) = (f, v)``.

    Element integrals of ``A`` are exact (panels split at the kinks of A).
    Without a reaction term the mean-zero solution is selected through a
    Lagrange multiplier.
    """
    if n < 4 or n & (n - 1):
        raise ValueError("n must be a power of two >= 4")
    h = 1.0 / n
    left = np.arange(n) / n
    # exact int_e A: A is affine on each sub-panel, so the midpoint rule is exact
    intA = h * problem.A(left + 0.5 * h, mu)
    for xi in problem.breakpoints:
        e = int(np.floor(xi * n))
        if left[e] < xi < left[e] + h:
            a_, b_ = np.array([left[e], xi]), np.array([xi, left[e] + h])
            intA[e] = np.sum((b_ - a_) * problem.A(0.5 * (a_ + b_), mu))
    i = np.arange(n)
    j = (i + 1) % n
    kd = intA / h**2
    c = problem.reaction
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([i, j, j, i])
    vals = np.concatenate([kd + c * h / 3, kd + c * h / 3, -kd + c * h / 6, -kd + c * h / 6])
    K = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    xq, wq = gauss_rule(4, left, left + h)
    t = (xq - np.repeat(left, 4)) / h
    fq = problem.rhs(xq) * wq
    load = np.bincount(np.repeat(i, 4), weights=fq * (1 - t), minlength=n)
    load += np.bincount(np.repeat(j, 4), weights=fq * t, minlength=n)
    if c == 0.0:
        # mean-zero gauge: int u = h * sum u_i for P1 on a uniform periodic mesh
        ones = sp.csr_matrix(np.full((1, n), h))
        K = sp.bmat([[K, ones.T], [ones, None]], format="csc")
        load = np.append(load, 0.0)
        u = spla.spsolve(K, load)[:n]
    else:
        u = spla.spsolve(K.tocsc(), load)
    if not np.all(np.isfinite(u)):
        raise np.linalg.LinAlgError("singular FEM system")
    return GridFunction(u)


class FEMTruth:
    """Smooth reconstruction of a FEM solution, evaluable with first derivative."""

    def __init__(self, problem: ProblemSpec, mu=None, n: int = 2**14):
        self.grid = fem_reference(problem, mu, n)
        self._spline = self.grid.interpolant()

    def __call__(self, x) -> np.ndarray:
        return self._spline(np.mod(x, 1.0))

    def dx(self, x) -> np.ndarray:
        return self._spline(np.mod(x, 1.0), 1)
