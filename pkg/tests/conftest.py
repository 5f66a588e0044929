import numpy as np
import pytest
import torch

from wavepinn.network import Architecture, init
from wavepinn.problems import DIFFUSION_REACTION, POISSON

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_arch():
    return Architecture((1, 8, 8, 1), "tanh")


@pytest.fixture
def small_arch_param():
    return Architecture((3, 8, 8, 1), "tanh")


@pytest.fixture
def theta(small_arch):
    return init(small_arch, 0)


@pytest.fixture
def theta_param(small_arch_param):
    return init(small_arch_param, 0)


@pytest.fixture
def poisson():
    return POISSON


@pytest.fixture
def diffreact():
    return DIFFUSION_REACTION


class ScaledCos:
    """Model ``s cos(2 pi x)`` with the jet interface; the exact solution for s = 1 (Poisson)."""

    def __init__(self, s=1.0):
        self.s = s

    def jet(self, x, mu=None, order=0):
        from wavepinn.network import Jet2, inputs

        z = inputs(x, mu)[..., 0]
        w = 2 * np.pi
        return Jet2(
            self.s * torch.cos(w * z),
            -self.s * w * torch.sin(w * z) if order >= 1 else None,
            -self.s * w * w * torch.cos(w * z) if order >= 2 else None,
        )

    def __call__(self, x, mu=None):
        return self.jet(x, mu).u


@pytest.fixture
def exact_cos():
    return ScaledCos()


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
            terminalreporter.write_line(ACCEPTANCE[key])
