"""One network for a whole family of diffusion-reaction problems.

The coefficient A(x; mu) is piecewise linear with kinks at 1/3 and 2/3; the
network takes (x, mu1, mu2) and is certified for every parameter at once.
Run: python demos/04_parametric_study.py
"""
import numpy as np
import torch
from scipy.stats import spearmanr

from wavepinn.certify import Truth, attach_errors, certify
from wavepinn.loss import LossConfig
from wavepinn.network import Architecture
from wavepinn.problems import get_problem
from wavepinn.training import TrainConfig, train

torch.set_num_threads(1)
prob = get_problem("diffusion_reaction")
print("parameter box", prob.box.tolist())

train_mus = prob.sample_grid(3)
test_mus = prob.sample_grid(4)
arch = Architecture.default(prob.p, (16, 16), "tanh")
J = 5

for form in ("weak", "ultraweak"):
    best = min(train(arch, LossConfig(f"wavelet_{form}", prob, J, mus=train_mus), TrainConfig(restarts=1, max_iters=150)), key=lambda r: r.loss)
    cert = attach_errors(certify(best.theta, prob, form, J + 2, test_mus), Truth(prob, 2**12))
    eta = cert.etas()
    err = np.array([r.error for r in cert.records])
    print(f"\n{form} (150 iterations, so errors are still large): bound >= error for {np.sum(eta >= err)}/{len(eta)} parameters")
    print(" mu1    mu2     eta        error")
    for r in cert.records[::3]:
        print(f"{r.mu[0]:5.2f} {r.mu[1]:6.2f}  {r.eta:.3e}  {r.error:.3e}")
    # the bound should rank parameters the way the error does
    print(f"Spearman correlation eta vs error: {spearmanr(eta, err)[0]:.2f}")
