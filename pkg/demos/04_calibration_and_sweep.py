"""Uncertainty analysis on a trained checkpoint: reliability diagram with
expected calibration error, and a sweep of the four metrics across noise
levels the model was never trained at.

Run demos/03_train_small.py first (it leaves demo03_checkpoint/ behind).
"""

from pathlib import Path

import depthseg as ds
from depthseg.viz import plot_reliability, plot_sweep

if not Path("demo03_checkpoint").exists():
    raise SystemExit("run demos/03_train_small.py first")

params = ds.load_checkpoint("demo03_checkpoint")

synth = ds.SynthesisConfig(
    n_samples=30, seed=99, image_shape=(64, 64),
    depth_cap=5, base_depth_range=(3, 5),
)
test_set = ds.synthesize_dataset(synth)

report, estimates, truths = ds.evaluate_model(
    params, test_set, lambda_=2.5, seed=5, return_estimates=True)
curve = ds.calibration(estimates, truths, n_bins=10)
print(f"expected calibration error: {curve.ece:.3f}")
for lo, hi, conf, acc, n in zip(curve.bin_edges[:-1], curve.bin_edges[1:],
                                curve.mean_confidence, curve.accuracy, curve.counts):
    if n:
        print(f"  conf [{lo:.1f},{hi:.1f}): mean {conf:.2f} acc {acc:.2f} (n={n})")
plot_reliability(curve, "demo04_reliability.png")

table = ds.noise_sweep([params], lambdas=[0.25, 1.0, 2.5, 10.0], dataset=test_set, seed=5)
for row in table.rows:
    print(f"lambda {row['lambda']:>5}: pixelwise {row['pixelwise_acc']:.3f} "
          f"center {row['center_acc']:.3f}")
table.to_csv("demo04_sweep.csv")
plot_sweep(table, "demo04_sweep.png")
print("wrote demo04_reliability.png, demo04_sweep.csv, demo04_sweep.png")
