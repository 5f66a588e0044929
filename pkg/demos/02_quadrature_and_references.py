"""Spline quadrature, Sobolev norms by FFT, and the FEM reference solution.

Run: python demos/02_quadrature_and_references.py
"""
import numpy as np

from wavepinn.problems import get_problem
from wavepinn.spectral import FEMTruth, GridFunction, sobolev_norm
from wavepinn.splinequad import PeriodizedFunction, QuadratureGrid, inner_product, single_scale_coeffs
from wavepinn.wavelet import make_basis

b = make_basis(2, 2)

# %% 3-point Gauss per dyadic cell is exact up to degree 5; kinks of A split cells
grid = QuadratureGrid.build(6, 3, breakpoints=(1 / 3, 2 / 3))
print("nodes", grid.size, "  int x^5 =", grid.integrate(grid.nodes**5), "(exact 1/6)")

# a single periodized scaling function, tested against cos and its derivative
phi = PeriodizedFunction(b, 5, 31)
print("(cos, phi_5,31) =", inner_product(lambda x: np.cos(2 * np.pi * x), phi))
print("(cos, phi'_5,31) =", inner_product(lambda x: np.cos(2 * np.pi * x), phi, r=1))
c = single_scale_coeffs(lambda x: np.sin(2 * np.pi * x), 5, b)
print("all 32 single-scale coefficients of sin, sum =", c.sum())

# %% Sobolev norms of periodic samples through the FFT
g = GridFunction.sample(lambda x: np.cos(2 * np.pi * x), 256)
for s in (-2, -1, 0, 1):
    print(f"||cos||_H^{s} = {sobolev_norm(g, s):.6f}")

# %% FEM truth for the parametric diffusion-reaction problem
prob = get_problem("diffusion_reaction")
mu = np.array([0.5, 2.0])
fine, coarse = FEMTruth(prob, mu, 2**14), FEMTruth(prob, mu, 2**10)
x = np.linspace(0, 1, 1001)
print("alpha(mu) =", prob.alpha(mu))
print("FEM 2^10 vs 2^14 max difference:", np.max(np.abs(fine(x) - coarse(x))))
