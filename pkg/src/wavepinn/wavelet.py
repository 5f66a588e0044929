"""Periodic biorthogonal B-spline wavelets on (0, 1).

Masks follow the Cohen-Daubechies-Feauveau construction: the primal scaling
function is the cardinal B-spline of order ``d`` and the dual has ``dt``
vanishing moments for the primal wavelet.  All transforms act along the last
axis so batches of coefficient vectors (one row per parameter) can be pushed
through in one call.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb, sqrt

import numpy as np

SQRT2 = sqrt(2.0)

# (d, dt) pairs with known-good masks; anything else raises.
SUPPORTED_PAIRS = frozenset({(2, 2), (2, 4), (3, 3), (3, 5), (4, 4), (4, 6)})


class BasisNotTabulatedError(ValueError):
    pass


class NormEquivalenceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mask:
    """Finite filter ``coeffs[i]`` sitting at integer index ``start + i``."""

    coeffs: np.ndarray
    start: int

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.start, self.start + len(self.coeffs))

    @property
    def stop(self) -> int:
        return self.start + len(self.coeffs) - 1

    def __getitem__(self, k: int) -> float:
        i = k - self.start
        if 0 <= i < len(self.coeffs):
            return float(self.coeffs[i])
        return 0.0

    def shifted(self, s: int) -> "Mask":
        return Mask(self.coeffs, self.start + s)


@dataclass(frozen=True, eq=False)
class WaveletBasis:
    d: int
    dt: int
    a: Mask
    at: Mask
    b: Mask
    bt: Mask
    gamma: float
    gamma_dual: float
    _cache: dict = field(default_factory=dict, repr=False, compare=False, hash=False)

    @property
    def name(self) -> str:
        return f"cdf{self.d}{self.dt}"

    def support(self, kind: str = "scaling", side: str = "primal") -> tuple[float, float]:
        """Support interval of the unperiodized mother function."""
        if kind == "scaling":
            m = self.a if side == "primal" else self.at
            return float(m.start), float(m.stop)
        phi_lo, phi_hi = self.support("scaling", side)
        m = self.b if side == "primal" else self.bt
        return (m.start + phi_lo) / 2.0, (m.stop + phi_hi) / 2.0


def _laurent_mul(p: Mask, q: Mask) -> Mask:
    return Mask(np.convolve(p.coeffs, q.coeffs), p.start + q.start)


def _laurent_add(p: Mask, q: Mask) -> Mask:
    lo = min(p.start, q.start)
    hi = max(p.stop, q.stop)
    out = np.zeros(hi - lo + 1)
    out[p.start - lo : p.stop - lo + 1] += p.coeffs
    out[q.start - lo : q.stop - lo + 1] += q.coeffs
    return Mask(out, lo)


def _primal_mask(d: int) -> Mask:
    return Mask(np.array([comb(d, k) for k in range(d + 1)], dtype=float) * 2.0 ** (1 - d), 0)


def _dual_mask(d: int, dt: int) -> Mask:
    ell = (d + dt) // 2
    # sin^2(xi/2) as a Laurent polynomial in z = e^{-i xi}
    y = Mask(np.array([-0.25, 0.5, -0.25]), -1)
    poly = Mask(np.zeros(1), 0)
    ypow = Mask(np.ones(1), 0)
    for n in range(ell):
        term = Mask(ypow.coeffs * comb(ell - 1 + n, n), ypow.start)
        poly = _laurent_add(poly, term)
        ypow = _laurent_mul(ypow, y)
    binom = Mask(np.array([comb(dt, k) for k in range(dt + 1)], dtype=float) * 2.0 ** (1 - dt), 0)
    at = _laurent_mul(binom, poly)
    # centre of ``at`` is dt/2, centre of ``a`` is d/2
    return at.shifted((d - dt) // 2)


def _wavelet_mask(m: Mask) -> Mask:
    """b_k = (-1)^k m_{1-k}."""
    ks = np.arange(1 - m.stop, 1 - m.start + 1)
    coeffs = np.array([(-1.0) ** (k % 2) * m[1 - k] for k in ks])
    return Mask(coeffs, int(ks[0]))


def sobolev_regularity(mask: Mask) -> float:
    """L2-Sobolev smoothness of the refinable function with this mask.

    Factors ``((1+z)/2)^N`` out of the symbol and reads the exponent off the
    spectral radius of the transfer operator of the remainder.
    """
    c = np.polynomial.polynomial.Polynomial(mask.coeffs / 2.0)
    n_fac = 0
    root = np.polynomial.polynomial.Polynomial([0.5, 0.5])
    while True:
        q, r = divmod(c, root)
        if np.max(np.abs(r.coef)) > 1e-12 * np.max(np.abs(c.coef)) or len(c.coef) <= 1:
            break
        c, n_fac = q, n_fac + 1
    q = c.coef
    w = np.convolve(q, q[::-1])  # |q|^2 coefficients, centred
    K = len(q) - 1
    idx = np.arange(-K, K + 1)
    T = np.zeros((2 * K + 1, 2 * K + 1))
    for i_pos, i in enumerate(idx):
        for j_pos, j in enumerate(idx):
            m = 2 * i - j + K
            if 0 <= m < len(w):
                T[i_pos, j_pos] = 2.0 * w[m]
    rho = np.max(np.abs(np.linalg.eigvals(T)))
    return n_fac - 0.5 * np.log2(rho)


@lru_cache(maxsize=None)
def make_basis(d: int, dt: int) -> WaveletBasis:
    """CDF biorthogonal pair with primal B-spline order ``d`` and dual order ``dt``."""
    if (d, dt) not in SUPPORTED_PAIRS:
        raise BasisNotTabulatedError(
            f"basis not tabulated: (d, dt) = ({d}, {dt}); supported {sorted(SUPPORTED_PAIRS)}"
        )
    a = _primal_mask(d)
    at = _dual_mask(d, dt)
    return WaveletBasis(
        d=d,
        dt=dt,
        a=a,
        at=at,
        b=_wavelet_mask(at),
        bt=_wavelet_mask(a),
        gamma=sobolev_regularity(a),
        gamma_dual=sobolev_regularity(at),
    )


# --------------------------------------------------------------------------
# coefficient pyramid


@dataclass
class CoefficientPyramid:
    """Multilevel coefficients ``(c_j0, d_j0, ..., d_{J-1})``.

    Blocks carry a leading batch shape; level ``j`` has ``2**j`` entries.
    """

    c0: np.ndarray
    d: list[np.ndarray]
    coarsest: int = 0

    def __post_init__(self):
        if self.c0.shape[-1] != 2**self.coarsest:
            raise ValueError(f"coarse block has {self.c0.shape[-1]} entries, expected {2**self.coarsest}")
        for i, dj in enumerate(self.d):
            j = self.coarsest + i
            if dj.shape[-1] != 2**j:
                raise ValueError(f"level {j} block has {dj.shape[-1]} entries, expected {2**j}")

    @property
    def J(self) -> int:
        return self.coarsest + len(self.d)

    @property
    def size(self) -> int:
        return 2**self.J

    def flat(self) -> np.ndarray:
        return np.concatenate([self.c0, *self.d], axis=-1)

    @classmethod
    def from_flat(cls, v: np.ndarray, coarsest: int = 0) -> "CoefficientPyramid":
        v = np.asarray(v, dtype=float)
        J = _log2_exact(v.shape[-1])
        c0 = v[..., : 2**coarsest]
        d = [v[..., 2**j : 2 ** (j + 1)] for j in range(coarsest, J)]
        return cls(c0.copy(), [x.copy() for x in d], coarsest)

    def level_weights(self, sigma: float) -> np.ndarray:
        """Per-entry weights of :func:`weighted_sobolev_sum` on the flat layout."""
        return _flat_weights(self.J, self.coarsest, sigma)


def _flat_weights(J: int, coarsest: int, sigma: float) -> np.ndarray:
    w = np.empty(2**J)
    w[: 2**coarsest] = 1.0
    for j in range(coarsest, J):
        w[2**j : 2 ** (j + 1)] = 2.0 ** (-2.0 * sigma * j)
    return w


def _log2_exact(n: int) -> int:
    J = int(n).bit_length() - 1
    if n < 1 or 2**J != n:
        raise ValueError(f"length {n} is not a power of two")
    return J


# --------------------------------------------------------------------------
# fast wavelet transform


_BLOCK = 2**14  # outputs per block: one block's slices stay in L2


def _analysis(c: np.ndarray, *masks: Mask) -> list[np.ndarray]:
    """``out[k] = sum_t h[t] c[(2k + start + t) mod N]`` for each mask.

    All masks read strided slices of one wrapped copy of ``c``, block by block
    over ``k`` so that long signals do not stream through memory once per tap.
    """
    N = c.shape[-1]
    lo = min(m.start for m in masks)
    hi = max(m.stop for m in masks)
    ext = np.take(c, np.arange(lo, hi + N) % N, axis=-1)
    outs = [np.zeros(c.shape[:-1] + (N // 2,)) for _ in masks]
    tmp = np.empty(c.shape[:-1] + (min(N // 2, _BLOCK),))
    for k0 in range(0, N // 2, _BLOCK):
        k1 = min(k0 + _BLOCK, N // 2)
        tb = tmp[..., : k1 - k0]
        for m, out in zip(masks, outs):
            ob = out[..., k0:k1]
            for t, coef in enumerate(m.coeffs, start=m.start - lo):
                np.multiply(ext[..., 2 * k0 + t : 2 * k1 + t : 2], coef / SQRT2, out=tb)
                ob += tb
    return outs


def _synthesis(coarse: np.ndarray, detail: np.ndarray, lo: Mask, hi: Mask) -> np.ndarray:
    N = 2 * coarse.shape[-1]
    out = np.zeros(coarse.shape[:-1] + (N,))
    for m, blk in ((lo, coarse), (hi, detail)):
        # transpose of _analysis: scatter into a wrapped buffer, then fold it back mod N
        n = len(m.coeffs)
        K = -(-(N + n) // N)
        ext = np.zeros(coarse.shape[:-1] + (K * N,))
        for t, coef in enumerate(m.coeffs):
            ext[..., t : t + N : 2] += (coef / SQRT2) * blk
        out += np.roll(ext.reshape(coarse.shape[:-1] + (K, N)).sum(axis=-2), m.start, axis=-1)
    return out


def fwt_decompose(cJ: np.ndarray, basis: WaveletBasis, coarsest: int = 0) -> CoefficientPyramid:
    """Map single-scale coefficients ``(r, phi_{J,k})`` to the pyramid."""
    c = np.asarray(cJ, dtype=float)
    J = _log2_exact(c.shape[-1])
    if not 0 <= coarsest <= J:
        raise ValueError(f"coarsest level {coarsest} outside [0, {J}]")
    details = []
    for _ in range(J - coarsest):
        d, c = _analysis(c, basis.b, basis.a)
        details.append(d)
    return CoefficientPyramid(c, details[::-1], coarsest)


def fwt_reconstruct(p: CoefficientPyramid, basis: WaveletBasis) -> np.ndarray:
    """Inverse of :func:`fwt_decompose`."""
    c = np.asarray(p.c0, dtype=float)
    for j, dj in enumerate(p.d, start=p.coarsest):
        if dj.shape[-1] != c.shape[-1]:
            raise ValueError(f"level {j} block has {dj.shape[-1]} entries, expected {c.shape[-1]}")
        c = _synthesis(c, dj, basis.at, basis.bt)
    return c


def fwt_decompose_adjoint(p: CoefficientPyramid, basis: WaveletBasis) -> np.ndarray:
    """Transpose of the decomposition matrix applied to a pyramid-shaped vector."""
    c = np.asarray(p.c0, dtype=float)
    for dj in p.d:
        c = _synthesis(c, dj, basis.a, basis.b)
    return c


def weighted_sobolev_sum(p: CoefficientPyramid, sigma: float) -> np.ndarray | float:
    """``||c0||^2 + sum_l 2^(-2 sigma l) ||d_l||^2`` (batched over leading axes)."""
    total = np.sum(p.c0**2, axis=-1)
    for j, dj in enumerate(p.d, start=p.coarsest):
        total = total + 2.0 ** (-2.0 * sigma * j) * np.sum(dj**2, axis=-1)
    return total


def adaptive_truncate(p: CoefficientPyramid, sigma: float, tol: float) -> CoefficientPyramid:
    """Zero every detail with ``2^(-sigma j) |d_jk| < tol``; the coarse block is kept."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    out = []
    for j, dj in enumerate(p.d, start=p.coarsest):
        keep = 2.0 ** (-sigma * j) * np.abs(dj) >= tol
        out.append(np.where(keep, dj, 0.0))
    return CoefficientPyramid(p.c0.copy(), out, p.coarsest)


# --------------------------------------------------------------------------
# Fourier transforms of the (unperiodized) dual functions


def _symbol(m: Mask, xi: np.ndarray) -> np.ndarray:
    """``(1/2) sum_k m_k exp(-i k xi)``."""
    return 0.5 * np.exp(-1j * np.multiply.outer(xi, m.indices)) @ m.coeffs


def scaling_fourier(basis: WaveletBasis, xi: np.ndarray, side: str = "dual") -> np.ndarray:
    """Infinite-product Fourier transform ``int phi(x) exp(-i xi x) dx``."""
    m = basis.at if side == "dual" else basis.a
    xi = np.asarray(xi, dtype=float)
    scale = np.max(np.abs(xi), initial=1.0)
    n_fac = int(np.ceil(np.log2(scale))) + 45
    out = np.ones(xi.shape, dtype=complex)
    t = xi / 2.0
    for _ in range(n_fac):
        out *= _symbol(m, t)
        t = t / 2.0
    return out


def wavelet_fourier(basis: WaveletBasis, xi: np.ndarray, side: str = "dual") -> np.ndarray:
    m = basis.bt if side == "dual" else basis.b
    xi = np.asarray(xi, dtype=float)
    return _symbol(m, xi / 2.0) * scaling_fourier(basis, xi / 2.0, side)


def _sobolev_weights(n: np.ndarray, sigma: float) -> np.ndarray:
    return (1.0 + (2.0 * np.pi * n) ** 2) ** sigma


def _default_nmax(J: int) -> int:
    return 2 ** (J + 6)


def estimate_norm_constants(
    basis: WaveletBasis, sigma: float, J_c: int = 8, n_max: int | None = None
) -> tuple[float, float]:
    """Norm-equivalence constants for dual expansions in ``H^sigma_per``.

    Returns ``(c_low, C_up)`` with
    ``c_low * S <= ||c0 phi~_0 + sum d_jk psi~_jk||^2_{H^sigma} <= C_up * S`` for every
    pyramid up to level ``J_c``, ``S = weighted_sobolev_sum(p, -sigma)``.  The Gram
    matrix is built from the Fourier transforms of the dual wavelets, truncated at
    ``|n| <= n_max``.
    """
    if not -basis.gamma < sigma < basis.gamma_dual:
        raise NormEquivalenceError(
            f"norm equivalence not valid for sigma={sigma} with {basis.name}: "
            f"need sigma in ({-basis.gamma:.3f}, {basis.gamma_dual:.3f})"
        )
    if J_c < 3:
        raise ValueError("J_c must be at least 3")
    n_max = _default_nmax(J_c) if n_max is None else n_max
    key = ("constants", float(sigma), J_c, n_max)
    if key not in basis._cache:
        G = dual_gram_matrix(basis, sigma, J_c, n_max)
        w = _flat_weights(J_c, 0, -sigma)
        s = 1.0 / np.sqrt(w)
        ev = np.linalg.eigvalsh(G * s[:, None] * s[None, :])
        basis._cache[key] = (float(ev[0]), float(ev[-1]))
    return basis._cache[key]


def dual_gram_matrix(basis: WaveletBasis, sigma: float, J: int, n_max: int) -> np.ndarray:
    """``H^sigma_per`` Gram matrix of ``{phi~_{0,0}, psi~_{j,k}: j < J}`` in flat pyramid order."""
    n = np.arange(0, n_max + 1)
    # real functions: fold negative frequencies onto positive ones
    mult = np.where(n == 0, 1.0, 2.0) * _sobolev_weights(n, sigma)
    G = np.zeros((2**J, 2**J))
    chunk = 4096
    for lo in range(0, len(n), chunk):
        nn = n[lo : lo + chunk]
        F = np.empty((2**J, len(nn)), dtype=complex)
        F[0] = scaling_fourier(basis, 2 * np.pi * nn)
        for j in range(J):
            hat = 2.0 ** (-j / 2) * wavelet_fourier(basis, 2 * np.pi * nn / 2**j)
            k = np.arange(2**j)
            phase = np.exp(-2j * np.pi * np.outer(k, nn) / 2**j)
            F[2**j : 2 ** (j + 1)] = phase * hat[None, :]
        Fw = F * mult[lo : lo + chunk][None, :]
        G += np.real(Fw @ F.conj().T)
    return G


def vanishing_moments(basis: WaveletBasis, qmax: int | None = None) -> np.ndarray:
    """Moments ``int x^q psi(x) dx`` of the primal wavelet, q = 0..qmax (exact quadrature)."""
    from .splinequad import bspline_eval

    qmax = basis.dt - 1 if qmax is None else qmax
    lo, hi = basis.support("wavelet", "primal")
    # psi is piecewise polynomial of degree d-1 on half-integers
    cells = np.arange(lo, hi, 0.5)
    nodes, weights = np.polynomial.legendre.leggauss(basis.d + qmax + 2)
    x = (cells[:, None] + 0.25 * (nodes[None, :] + 1)).ravel()
    w = np.tile(0.25 * weights, len(cells))
    psi = sum(c * bspline_eval(basis.d, 0, 2 * x - k) for k, c in zip(basis.b.indices, basis.b.coeffs))
    return np.array([np.sum(w * x**q * psi) for q in range(qmax + 1)])


# --------------------------------------------------------------------------
# serialization

_PYR_MAGIC = b"WPYR"
_PYR_HEADER = struct.Struct("<4sIIIId")  # magic, J, coarsest, d, dt, sigma


def save_pyramid(path, p: CoefficientPyramid, basis: WaveletBasis, sigma: float) -> None:
    """Little-endian binary: header then float64 blocks coarse to fine."""
    v = np.asarray(p.flat(), dtype="<f8")
    if v.ndim != 1:
        raise ValueError("only single (unbatched) pyramids can be saved")
    with open(path, "wb") as fh:
        fh.write(_PYR_HEADER.pack(_PYR_MAGIC, p.J, p.coarsest, basis.d, basis.dt, float(sigma)))
        fh.write(v.tobytes())


def load_pyramid(path) -> tuple[CoefficientPyramid, WaveletBasis, float]:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, J, coarsest, d, dt, sigma = _PYR_HEADER.unpack_from(raw)
    if magic != _PYR_MAGIC:
        raise ValueError(f"{path}: not a pyramid file")
    v = np.frombuffer(raw, dtype="<f8", offset=_PYR_HEADER.size)
    if len(v) != 2**J:
        raise ValueError(f"{path}: expected {2**J} coefficients, found {len(v)}")
    return CoefficientPyramid.from_flat(v.astype(float), coarsest), make_basis(d, dt), sigma


def write_pyramid_csv(path, p: CoefficientPyramid, basis: WaveletBasis, sigma: float) -> None:
    """Rows ``level,k,value``; level ``-1`` holds the coarse scaling block."""
    with open(path, "w") as fh:
        fh.write(f"# J={p.J} coarsest={p.coarsest} basis={basis.name} sigma={sigma}\n")
        fh.write("level,k,value\n")
        for k, v in enumerate(np.ravel(p.c0)):
            fh.write(f"-1,{k},{v:.17g}\n")
        for j, dj in enumerate(p.d, start=p.coarsest):
            for k, v in enumerate(np.ravel(dj)):
                fh.write(f"{j},{k},{v:.17g}\n")
