"""Periodic spline wavelets: the fast transform, its inverse and weighted sums.

Run: python demos/01_wavelets_fwt.py
"""
import numpy as np

from wavepinn.wavelet import (
    estimate_norm_constants,
    fwt_decompose,
    fwt_reconstruct,
    make_basis,
    vanishing_moments,
    weighted_sobolev_sum,
)

# %% two bases: (2,2) for the weak loss, (4,4) for the ultra-weak loss
for d, dt in [(2, 2), (4, 4)]:
    b = make_basis(d, dt)
    print(f"CDF({d},{dt}) primal mask length {len(b.a.coeffs)}, moments of psi:", np.round(vanishing_moments(b), 12))

# %% round trip on random single-scale coefficients
rng = np.random.default_rng(0)
b = make_basis(2, 2)
c = rng.standard_normal(2**12)
p = fwt_decompose(c, b)
print("levels", p.J, "reconstruction error", np.max(np.abs(fwt_reconstruct(p, b) - c)))

# smooth data has tiny fine-level details
x = np.arange(2**12) / 2**12
p = fwt_decompose(np.cos(2 * np.pi * x) * 2 ** (-6), b)
for j, dj in enumerate(p.d):
    print(f"  level {j:2d}  max |d| = {np.max(np.abs(dj)):.2e}")

# %% the weighted sum behind the loss, and the constants that turn it into a norm bound
print("weighted sum, sigma = -1:", weighted_sobolev_sum(p, -1.0))
for J in (4, 6, 8):
    lo, up = estimate_norm_constants(b, -1.0, J)
    print(f"J={J}: c_low {lo:.4f}, C_up {up:.4f}")
