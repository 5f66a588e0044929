"""A posteriori error bounds from the wavelet residual norm.

For the weak form ``||u - Phi||_{H1} <= ||r||_{H^-1} / alpha``; for the
ultra-weak form ``||u - Phi||_{L2} = |||r|||' <= ||r||_{H^-2} / alpha``.  The
dual norm of the (level-J) residual is bounded by ``sqrt(C_up * S)`` with
``S`` the weighted coefficient sum of the loss.  Nothing in this path touches a
reference solution; errors against a truth are computed separately.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from .formulations import FORMULATIONS, Formulation, as_model, get_formulation
from .loss import LossConfig, solution_model, wavelet_terms
from .network import Params
from .problems import ProblemSpec, get_problem
from .spectral import FEMTruth
from .splinequad import QuadratureGrid
from .wavelet import estimate_norm_constants

log = logging.getLogger(__name__)

CONSTANTS_MAX_LEVEL = 8


class MissingConstantsError(ValueError):
    pass


@dataclass(frozen=True)
class NormConstants:
    c_low: float
    C_up: float
    J_c: int

    @classmethod
    def estimate(cls, form: Formulation, J: int) -> "NormConstants":
        """Constants for ``H^{-sigma}`` at level ``min(J, 8)``; they are level-stable beyond that."""
        J_c = max(3, min(J, CONSTANTS_MAX_LEVEL))
        lo, up = estimate_norm_constants(form.basis, -form.sigma, J_c)
        return cls(lo, up, J_c)


@dataclass
class CertificateRecord:
    mu: np.ndarray
    eta: float
    loss: float
    alpha: float
    C_up: float
    J: int
    error: float | None = None

    @property
    def effectivity(self) -> float:
        return effectivity(self.eta, self.error) if self.error is not None else math.nan


@dataclass
class CertifiedSolution:
    theta: Params
    problem: ProblemSpec
    formulation: str
    J: int
    constants: NormConstants
    records: list[CertificateRecord] = field(default_factory=list)

    def etas(self) -> np.ndarray:
        return np.array([r.eta for r in self.records])


def _mus_rows(prob: ProblemSpec, mus) -> np.ndarray | None:
    if prob.p == 0:
        return None
    return np.asarray(mus, dtype=float).reshape(-1, prob.p)


def residual_sums(theta, prob: ProblemSpec, formulation: str, J: int, mus=None) -> np.ndarray:
    """Weighted sums ``S(mu)`` of the level-J residual pyramid, one per parameter row."""
    cfg = LossConfig(f"wavelet_{formulation}", prob, J, mus=_mus_rows(prob, mus))
    with torch.no_grad():
        return np.atleast_1d(wavelet_terms(theta, cfg).numpy()).copy()


def bound_from_sum(S: float, alpha: float, C_up: float) -> float:
    return math.sqrt(C_up * max(float(S), 0.0)) / alpha


def error_bound(
    theta,
    mu,
    formulation: str,
    constants: NormConstants | None,
    problem: ProblemSpec | str,
    J: int,
) -> float:
    """``eta(mu) = sqrt(C_up * S(mu)) / alpha(mu)``."""
    if constants is None:
        raise MissingConstantsError("no norm-equivalence constants supplied; refusing to emit a bound")
    prob = get_problem(problem) if isinstance(problem, str) else problem
    S = residual_sums(theta, prob, formulation, J, mu)[0]
    return bound_from_sum(S, prob.alpha(mu), constants.C_up)


def certify(
    theta,
    problem: ProblemSpec | str,
    formulation: str,
    J: int,
    mus=None,
    constants: NormConstants | None = None,
) -> CertifiedSolution:
    """Bounds for every parameter row of ``mus`` in one batched residual evaluation."""
    prob = get_problem(problem) if isinstance(problem, str) else problem
    form = get_formulation(formulation)
    constants = constants or NormConstants.estimate(form, J)
    rows = _mus_rows(prob, mus)
    S = residual_sums(theta, prob, formulation, J, rows)
    out = CertifiedSolution(theta, prob, formulation, J, constants)
    for i, s in enumerate(S):
        mu = None if rows is None else rows[i]
        a = prob.alpha(mu)
        out.records.append(
            CertificateRecord(np.array([]) if mu is None else mu, bound_from_sum(s, a, constants.C_up), float(s), a, constants.C_up, J)
        )
    return out


# --------------------------------------------------------------------------
# true errors (need a truth; kept apart from the certificate itself)


class Truth:
    """``u`` and ``u'`` for a parameter value: analytic if known, otherwise FEM."""

    def __init__(self, prob: ProblemSpec, fem_n: int = 2**14):
        self.prob = prob
        self.fem_n = fem_n
        self._cache: dict[tuple, FEMTruth] = {}

    def functions(self, mu=None) -> tuple[Callable, Callable]:
        if self.prob.exact is not None:
            return self.prob.exact, self.prob.exact_dx
        key = tuple(np.asarray(mu, dtype=float).ravel())
        if key not in self._cache:
            self._cache[key] = FEMTruth(self.prob, mu, self.fem_n)
        t = self._cache[key]
        return t, t.dx


def error_grid(prob: ProblemSpec, level: int = 10, q: int = 4) -> QuadratureGrid:
    return QuadratureGrid.build(level, q, prob.breakpoints)


def true_errors(
    theta, prob: ProblemSpec, truth: Truth, mus=None, grid: QuadratureGrid | None = None, formulation: str | None = None
) -> np.ndarray:
    """``(L2 error, H1 error)`` per parameter row, shape (m, 2).

    The network is compared as the trial function of ``formulation`` (see
    :func:`loss.solution_model`), e.g. ``Q Phi`` for zero-mean problems.
    """
    grid = grid or error_grid(prob)
    model = solution_model(prob, as_model(theta), grid, formulation)
    rows = _mus_rows(prob, mus)
    x, w = grid.nodes, grid.weights
    with torch.no_grad():
        jet = model.jet(x, rows, 1)
    U = np.atleast_2d(jet.u.numpy())
    dU = np.atleast_2d(jet.ux.numpy())
    out = np.empty((U.shape[0], 2))
    for i in range(U.shape[0]):
        u, du = truth.functions(None if rows is None else rows[i])
        e0 = float(w @ (u(x) - U[i]) ** 2)
        e1 = float(w @ (du(x) - dU[i]) ** 2)
        out[i] = math.sqrt(e0), math.sqrt(e0 + e1)
    return out


def effectivity(eta: float, error: float) -> float:
    """``eta / error``; a vanishing error gives +inf (logged)."""
    if error == 0.0:
        log.warning("true error is zero; effectivity reported as +inf")
        return math.inf
    return eta / error


def attach_errors(cert: CertifiedSolution, truth: Truth, grid: QuadratureGrid | None = None) -> CertifiedSolution:
    """Fill ``record.error`` in the formulation's norm (H1 for weak, L2 for ultra-weak)."""
    rows = None if cert.problem.p == 0 else np.stack([r.mu for r in cert.records])
    errs = true_errors(cert.theta, cert.problem, truth, rows, grid, cert.formulation)
    col = 1 if FORMULATIONS[cert.formulation].error_norm == "H1" else 0
    for r, e in zip(cert.records, errs):
        r.error = float(e[col])
    return cert


def write_certificate(path, cert: CertifiedSolution, header: Sequence[str] = ()) -> None:
    """CSV with columns mu1..mup, eta, error_if_truth, effectivity, J, alpha, C_up."""
    p = cert.problem.p
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        wr = csv.writer(fh)
        wr.writerow([f"mu{i + 1}" for i in range(p)] + ["eta", "error_if_truth", "effectivity", "J", "alpha", "C_up"])
        for r in cert.records:
            err = "" if r.error is None else repr(r.error)
            eff = "" if r.error is None else repr(r.effectivity)
            wr.writerow([repr(float(m)) for m in r.mu] + [repr(r.eta), err, eff, r.J, repr(r.alpha), repr(r.C_up)])
