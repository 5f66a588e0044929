import math

import numpy as np
import pytest

from wavepinn.problems import DIFFUSION_REACTION, FOUR_PI2, POISSON
from wavepinn.spectral import CascadeError, FEMTruth, GridFunction, cascade_values, fem_reference, sobolev_norm
from wavepinn.splinequad import bspline_eval, wavelet_eval
from wavepinn.wavelet import make_basis

COS = lambda x: np.cos(2 * np.pi * x)


def test_sobolev_norm_examples():
    one = GridFunction(np.ones(64))
    for s in (-2, -1, 0, 1.5):
        assert sobolev_norm(one, s) == pytest.approx(1.0)
    g = GridFunction.sample(COS, 64)
    assert sobolev_norm(g, -1) == pytest.approx(math.sqrt(0.5 / (1 + FOUR_PI2)), rel=1e-12)
    assert sobolev_norm(g, -1) == pytest.approx(0.11114, abs=5e-6)
    assert sobolev_norm(g, 0) == pytest.approx(1 / math.sqrt(2), rel=1e-12)


def test_parseval_and_ordering():
    g = lambda x: np.exp(np.sin(2 * np.pi * x))
    G = GridFunction.sample(g, 256)
    trap = math.sqrt(np.mean(G.values**2))
    assert sobolev_norm(G, 0) == pytest.approx(trap, rel=1e-12)
    assert sobolev_norm(G, -1) <= sobolev_norm(G, 0) <= sobolev_norm(G, 1)


def test_grid_function_power_of_two():
    with pytest.raises(ValueError):
        GridFunction(np.ones(12))


def test_cascade_primal_hat():
    s = cascade_values(make_basis(2, 2), "primal", "scaling", depth=6)
    np.testing.assert_allclose(s.values, bspline_eval(2, 0, s.x), atol=1e-14)
    assert s.residual < 1e-8


def test_cascade_primal_cubic():
    s = cascade_values(make_basis(4, 4), "primal", "scaling", depth=6)
    np.testing.assert_allclose(s.values, bspline_eval(4, 0, s.x), atol=1e-10)


def test_cascade_primal_wavelet():
    b = make_basis(2, 2)
    s = cascade_values(b, "primal", "wavelet", depth=6)
    np.testing.assert_allclose(s.values, wavelet_eval(b, 0, s.x), atol=1e-14)


def test_cascade_dual_partition_of_unity():
    b = make_basis(2, 4)
    s = cascade_values(b, "dual", "scaling", depth=6)
    # sum over integer shifts at each dyadic x in [0, 1)
    step = 2**6
    tot = np.zeros(step)
    for i, v in enumerate(s.values):
        tot[(round(s.x[i] * step)) % step] += v
    np.testing.assert_allclose(tot, 1.0, atol=1e-8)


def test_cascade_rough_dual_raises():
    with pytest.raises(CascadeError):
        cascade_values(make_basis(4, 4), "dual", "scaling", depth=4)


def test_fem_poisson_vs_exact():
    u = fem_reference(POISSON, None, 2**14)
    x = u.x
    assert np.sqrt(np.mean((u.values - COS(x)) ** 2)) < 1e-6


def test_fem_constant_coefficient():
    errs = []
    for n in (2**8, 2**9):
        u = fem_reference(DIFFUSION_REACTION, [1.0, 1.0], n)
        exact = FOUR_PI2 / (1 + FOUR_PI2) * COS(u.x)
        errs.append(np.sqrt(np.mean((u.values - exact) ** 2)))
    assert errs[1] < errs[0] / 3.5  # O(n^-2)


def test_fem_self_convergence_kinked():
    mu = [0.125, 2.0]
    a, b, c = (FEMTruth(DIFFUSION_REACTION, mu, n) for n in (2**9, 2**10, 2**11))
    x = np.linspace(0, 1, 4001)[:-1]
    e1 = np.sqrt(np.mean((a(x) - b(x)) ** 2))
    e2 = np.sqrt(np.mean((b(x) - c(x)) ** 2))
    assert e1 / e2 == pytest.approx(4.0, rel=0.25)


def test_fem_periodic_closure(tmp_path):
    u = fem_reference(DIFFUSION_REACTION, [0.5, 1.5], 2**12)
    x, v = u.closed()
    assert v[0] == v[-1] and x[-1] == 1.0
    u.to_csv(tmp_path / "u.csv")
    data = np.loadtxt(tmp_path / "u.csv", delimiter=",", skiprows=1)
    assert data.shape == (2**12, 2)
