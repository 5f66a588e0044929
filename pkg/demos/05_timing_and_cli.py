"""Cost of one loss evaluation per level, and the same study through the command line.

Run: python demos/05_timing_and_cli.py
"""
import subprocess
import sys
import tempfile
from pathlib import Path

import torch

from wavepinn.experiments import bench_losses
from wavepinn.network import Architecture
from wavepinn.problems import get_problem

torch.set_num_threads(1)
rows = bench_losses(get_problem("poisson1d"), Architecture.default(0), [6, 8, 10, 12], repeats=5)
print("level  ultraweak   weak       classical  mse")
for J, *t in rows:
    print(f"{int(J):5d}  " + "  ".join(f"{v:.2e}" for v in t))

# %% the CLI writes the same table with a provenance header
with tempfile.TemporaryDirectory() as d:
    cfg = Path(d) / "bench.yaml"
    cfg.write_text("bench:\n  levels: [6, 8]\n  repeats: 3\n")
    out = subprocess.run([sys.executable, "-m", "wavepinn", "bench", "--config", str(cfg), "--out", d], capture_output=True, text=True, check=True)
    print(Path(out.stdout.strip()).read_text())
