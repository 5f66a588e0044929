import numpy as np
import pytest
import torch

from conftest import ScaledCos
from wavepinn.formulations import (
    Assembler,
    apply_adjoint,
    boundary_residual,
    classical_residual,
    ultraweak_coeff,
    weak_tested_residual,
)
from wavepinn.network import Jet2, Network, inputs
from wavepinn.problems import DIFFUSION_REACTION, FOUR_PI2, POISSON
from wavepinn.spectral import GridFunction, sobolev_norm
from wavepinn.splinequad import PeriodizedFunction, QuadratureGrid, inner_product, periodized_eval
from wavepinn.wavelet import make_basis

B22, B44 = make_basis(2, 2), make_basis(4, 4)


class Identity:
    def jet(self, x, mu=None, order=0):
        z = inputs(x, mu)[..., 0]
        return Jet2(z, torch.ones_like(z) if order >= 1 else None, torch.zeros_like(z) if order >= 2 else None)


class Zero(ScaledCos):
    def __init__(self):
        super().__init__(0.0)


def test_classical_examples(exact_cos, rng):
    x = rng.uniform(0, 1, 50)
    assert torch.max(classical_residual(POISSON, exact_cos, x).abs()) < 1e-10
    assert classical_residual(POISSON, Zero(), [0.0]).item() == pytest.approx(FOUR_PI2, rel=1e-15)
    assert abs(classical_residual(POISSON, Zero(), [0.25]).item()) < 1e-12


def test_classical_diffusion_reaction_constant_coefficient(rng):
    # A = 1: exact solution is 4pi^2/(1+4pi^2) cos
    x = rng.uniform(0, 1, 50)
    r = classical_residual(DIFFUSION_REACTION, ScaledCos(FOUR_PI2 / (1 + FOUR_PI2)), x, np.array([1.0, 1.0]))
    assert torch.max(r.abs()) < 1e-10


def test_classical_kink_logged(caplog, theta_param):
    import logging

    with caplog.at_level(logging.INFO):
        classical_residual(DIFFUSION_REACTION, theta_param, [1 / 3], np.array([0.5, 1.0]))
    assert "kink" in caplog.text


def test_boundary_examples(exact_cos):
    torch.testing.assert_close(boundary_residual(POISSON, Identity()), torch.tensor([-1.0, 0.0], dtype=torch.float64))
    assert torch.max(boundary_residual(POISSON, exact_cos).abs()) < 1e-12


def test_weak_residual_exact_and_zero(exact_cos):
    for k in (0, 5, 31):
        test = PeriodizedFunction(B22, 5, k)
        fv = inner_product(POISSON.rhs, test)
        assert abs(weak_tested_residual(POISSON, exact_cos, None, test).item()) < 1e-6 * abs(fv) + 1e-9
        assert weak_tested_residual(POISSON, Zero(), None, test).item() == pytest.approx(fv, rel=1e-13)


def test_weak_residual_linear_in_test(theta):
    # psi_{j,k} = sum_m b_{m-2k}/sqrt2 phi_{j+1,m}
    j, k = 3, 2
    lhs = weak_tested_residual(POISSON, theta, None, PeriodizedFunction(B22, j, k, "wavelet")).item()
    rhs = sum(
        B22.b[m - 2 * k] / np.sqrt(2) * weak_tested_residual(POISSON, theta, None, PeriodizedFunction(B22, j + 1, m % 2 ** (j + 1))).item()
        for m in range(2 * k + B22.b.start, 2 * k + B22.b.stop + 1)
    )
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_apply_adjoint_constant_coefficient_vs_fd(rng):
    n = 16
    coef = np.cos(2 * np.pi * (np.arange(n) + 2) / n)
    tests = [PeriodizedFunction(B44, 4, k) for k in range(n)]
    v = lambda x: sum(c * periodized_eval(t, x) for c, t in zip(coef, tests))
    x = rng.uniform(0.01, 0.99, 40)
    h = 1e-4
    fd = -(v(x + h) - 2 * v(x) + v(x - h)) / h**2 + v(x)
    got = sum(c * apply_adjoint(DIFFUSION_REACTION, [1.0, 1.0], t, x) for c, t in zip(coef, tests))
    np.testing.assert_allclose(got, fd, rtol=1e-5, atol=1e-3)


def test_apply_adjoint_needs_smooth_tests():
    with pytest.raises(ValueError):
        apply_adjoint(POISSON, None, PeriodizedFunction(B22, 3, 0), [0.2])


def test_apply_adjoint_continuous_inside_support():
    t = PeriodizedFunction(B44, 4, 1)  # support [1/16, 5/16], clear of the kinks
    x = np.linspace(0.07, 0.3, 2001)
    v = apply_adjoint(DIFFUSION_REACTION, [0.4, 1.7], t, x)
    assert np.max(np.abs(np.diff(v))) < 1e-2 * np.max(np.abs(v))


def _schoenberg_cos(J):
    n = 2**J
    coef = 2 ** (-J / 2) * np.cos(2 * np.pi * (np.arange(n) + 2) / n)
    return coef, [PeriodizedFunction(B44, J, k) for k in range(n)]


def test_test_norm_of_cosine_spline():
    vals = []
    for J in (5, 7):
        coef, tests = _schoenberg_cos(J)
        g = QuadratureGrid.build(J, 4)
        Bv = sum(c * apply_adjoint(POISSON, None, t, g.nodes) for c, t in zip(coef, tests))
        vals.append(np.sqrt(g.integrate(Bv**2)))
    target = FOUR_PI2 / np.sqrt(2)
    assert abs(vals[1] - target) < abs(vals[0] - target)
    assert vals[1] == pytest.approx(target, rel=1e-2)


def test_ultraweak_exact_and_zero(exact_cos):
    for k in (0, 7, 31):
        fv = inner_product(POISSON.rhs, PeriodizedFunction(B44, 5, k))
        assert abs(ultraweak_coeff(POISSON, exact_cos, None, 5, k).item()) < 1e-6 * abs(fv) + 1e-9
        assert ultraweak_coeff(POISSON, Zero(), None, 5, k).item() == pytest.approx(fv, rel=1e-13)


@pytest.mark.parametrize("J", [3, 5, 8])
def test_integration_by_parts_consistency(theta, J):
    # interior tests (no seam) so that the boundary term vanishes for a non-periodic net
    for k in (1, 2 ** (J - 1)):
        w = weak_tested_residual(POISSON, theta, None, PeriodizedFunction(B44, J, k), q=8).item()
        u = ultraweak_coeff(POISSON, theta, None, J, k, q=8).item()
        assert u == pytest.approx(w, rel=1e-8, abs=1e-10)


def test_integration_by_parts_parametric(theta_param):
    mu = np.array([0.3, 1.8])
    for k in (2, 3, 9):
        t = PeriodizedFunction(B44, 4, k)
        w = weak_tested_residual(DIFFUSION_REACTION, theta_param, mu, t, q=8).item()
        u = ultraweak_coeff(DIFFUSION_REACTION, theta_param, mu, 4, k, q=8).item()
        assert u == pytest.approx(w, rel=1e-8)


@pytest.mark.parametrize("form,basis", [("weak", B22), ("ultraweak", B44)])
@pytest.mark.parametrize("prob", [POISSON, DIFFUSION_REACTION])
def test_assembler_matches_pointwise(form, basis, prob, theta, theta_param):
    J = 4
    asm = Assembler(prob, form, J)
    net = theta if prob.p == 0 else theta_param
    mus = None if prob.p == 0 else np.array([[0.2, 1.1], [1.9, 0.6]])
    C = asm.coefficients(Network(net), mus).detach().numpy()
    for i, mu in enumerate([None] if mus is None else mus):
        for k in range(2**J):
            if form == "weak":
                ref = weak_tested_residual(prob, net, mu, PeriodizedFunction(basis, J, k)).item()
            else:
                ref = ultraweak_coeff(prob, net, mu, J, k).item()
            assert C[i, k] == pytest.approx(ref, rel=1e-12, abs=1e-12)


def _random_spline(rng, J=3):
    coef = rng.standard_normal(2**J)
    tests = [PeriodizedFunction(B44, J, k) for k in range(2**J)]
    return lambda x, r=0: sum(c * periodized_eval(t, x, r) for c, t in zip(coef, tests))


def _B(prob, mu, v, x):
    A, dA = prob.A(x, mu), prob.dA(x, mu)
    return -A * v(x, 2) - dA * v(x, 1) + v(x)


def test_self_adjointness(rng):
    g = QuadratureGrid.build(5, 4, DIFFUSION_REACTION.breakpoints)
    for _ in range(10):
        mu = rng.uniform(0.125, 2, 2)
        u, v = _random_spline(rng), _random_spline(rng)
        lhs = g.integrate(_B(DIFFUSION_REACTION, mu, u, g.nodes) * v(g.nodes))
        rhs = g.integrate(u(g.nodes) * _B(DIFFUSION_REACTION, mu, v, g.nodes))
        assert lhs == pytest.approx(rhs, rel=1e-8)


def test_coercivity_witness(rng):
    g = QuadratureGrid.build(5, 4, DIFFUSION_REACTION.breakpoints)
    x = g.nodes
    for _ in range(20):
        mu = rng.uniform(0.125, 2, 2)
        v = _random_spline(rng)
        b = g.integrate(DIFFUSION_REACTION.A(x, mu) * v(x, 1) ** 2 + v(x) ** 2)
        h1 = g.integrate(v(x, 1) ** 2 + v(x) ** 2)
        assert b >= DIFFUSION_REACTION.alpha(mu) * h1 * (1 - 1e-12)


def test_test_norm_sandwich(rng):
    g = QuadratureGrid.build(5, 4, DIFFUSION_REACTION.breakpoints)
    for _ in range(10):
        mu = rng.uniform(0.125, 2, 2)
        v = _random_spline(rng)
        h2 = sobolev_norm(GridFunction.sample(v, 2**14), 2.0)
        tn = np.sqrt(g.integrate(_B(DIFFUSION_REACTION, mu, v, g.nodes) ** 2))
        assert DIFFUSION_REACTION.alpha(mu) * h2 <= tn <= DIFFUSION_REACTION.continuity(mu) * h2
