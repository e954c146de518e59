#!/usr/bin/env python3
"""Learn the policy-to-outcome map and pick the cheapest adequate policy.

Runs a small sweep over pool counts (this is the slow part, a couple of
minutes at the demo scale), fits Gaussian-process surrogates for accuracy
and cost, and ranks the pool counts that are predicted to meet an accuracy
requirement.  If the figure package is installed, renders the sweep figures
as well.
"""

import shutil
import subprocess
from pathlib import Path

from edgepool.experiment import ExperimentConfig, fit_and_select, run_sweep

data = Path(__file__).parent / "data"
out = Path(__file__).parent / "sweep_out"
config = ExperimentConfig(
    lambda_max=[1.0],
    k=[1, 2, 4, 8, 16],
    horizon_s=120,
    seeds=[1, 2, 3],
    train_images=str(data / "train-images-idx3-ubyte"),
    train_labels=str(data / "train-labels-idx1-ubyte"),
    test_images=str(data / "t10k-images-idx3-ubyte"),
    test_labels=str(data / "t10k-labels-idx1-ubyte"),
    n_aps=16,
    eval_period_s=60,
    out_dir=str(out),
    workers=2,
)

print(f"sweeping k={config.k} x seeds={config.seeds} ...")
result = run_sweep(config)
print(f"{len(result.rows)} runs done; summary at {out / 'summary.csv'}\n")

for row in result.rows:
    print(f"  k={row['k']:>2} seed={row['seed']}: accuracy {row['final_accuracy']:.3f}, "
          f"total {row['total_ru_avg']:7.2f} RU/s")

# at demo scale (tiny dataset, 2-minute horizon) accuracies stay modest;
# the full-scale reference sweep in the acceptance suite reaches ~0.95
requirement = 0.4
report = fit_and_select(config, out / "summary.csv", required_accuracy=requirement)
print()
print(report.to_text())

if shutil.which("plot"):
    fig = out / "ru_bars.png"
    subprocess.run(
        ["plot", "--kind", "ru_bars", "--in", str(out / "summary.csv"),
         "--out", str(fig)],
        check=True,
    )
    print(f"\nfigure written to {fig} (data points in {fig.with_name('ru_bars.points.csv')})")
