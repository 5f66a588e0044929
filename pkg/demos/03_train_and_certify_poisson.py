"""Train wavelet-loss networks on the periodic Poisson problem and certify them.

The bound needs only the residual; the exact solution is used afterwards to
see how tight it is.  Run: python demos/03_train_and_certify_poisson.py
"""
import torch

from wavepinn.certify import Truth, attach_errors, certify
from wavepinn.loss import LossConfig
from wavepinn.network import Architecture
from wavepinn.problems import get_problem
from wavepinn.training import TrainConfig, train

torch.set_num_threads(1)
prob = get_problem("poisson1d")
arch = Architecture.default(0, (16, 16), "tanh")
J = 5

for form in ("weak", "ultraweak"):
    runs = train(arch, LossConfig(f"wavelet_{form}", prob, J), TrainConfig(restarts=2, max_iters=150))
    best = min(runs, key=lambda r: r.loss)
    # certify two levels finer than training, so the bound sees the unresolved residual too
    cert = attach_errors(certify(best.theta, prob, form, J + 2), Truth(prob))
    rec = cert.records[0]
    norm = "H1" if form == "weak" else "L2"
    print(f"{form:9s} loss {best.loss:.2e}  eta {rec.eta:.3e}  true {norm} error {rec.error:.3e}  effectivity {rec.effectivity:.1f}")
