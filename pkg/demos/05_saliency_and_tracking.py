"""Interpretability and dynamics on a trained checkpoint: input-gradient
saliency (which input pixels drive one output probability, and how far the
sensitivity spreads as noise grows), then per-pixel probability traces
over an image sequence with a column that blinks in and out.

Run demos/03_train_small.py first (it leaves demo03_checkpoint/ behind).
"""

from pathlib import Path

import numpy as np

import depthseg as ds
from depthseg.evaluation import track_sequence
from depthseg.saliency import gradient_spread, input_gradient
from depthseg.viz import plot_saliency, plot_track

if not Path("demo03_checkpoint").exists():
    raise SystemExit("run demos/03_train_small.py first")

params = ds.load_checkpoint("demo03_checkpoint")

profile = ds.SurfaceProfile(ds.ProfileKind.FLAT, base_depth=4, wedge_rows=1)
model = ds.generate_model(profile, image_shape=(64, 64), pitch=12.0, seed=21)
clean = ds.render(model, ds.default_contrast_curve())

# Saliency at a column-center output pixel, over increasing noise:
# the lower the SNR, the farther the model reaches for context.
centers = ds.labels.column_centers(model, factor=4)
r, c, _ = centers[len(centers) // 2]
pixel = (round(r), round(c))
for lam in (0.1, 1.0, 2.5):
    noisy = ds.corrupt(clean, lam, seed=4)
    smap = input_gradient(params, noisy, pixel, depth=4)
    print(f"lambda {lam:>4}: gradient spread {gradient_spread(smap):6.2f} px")
plot_saliency(smap, "demo05_saliency.png")

# A sequence in which the tracked surface column alternates between
# depth 1 and vacancy; the estimate should flip with it.
surface_heavy = [col for col in model.columns
                 if col.species is ds.Species.HEAVY and col.depth > 0]
target = min(surface_heavy, key=lambda col: col.row)
frames = []
for t in range(12):
    depth_t = 1 if t % 2 == 0 else 0
    cols = [col for col in model.columns if col is not target]
    cols.append(ds.Column(row=target.row, col=target.col,
                          species=target.species, depth=depth_t))
    frame_model = ds.AtomicModel(columns=cols, lattice_pitch_px=model.lattice_pitch_px,
                                 image_shape=model.image_shape)
    frame_clean = ds.render(frame_model, ds.default_contrast_curve())
    frames.append(ds.corrupt(frame_clean, 2.5, seed=100 + t))

track_pixel = (round(target.row / 4), round(target.col / 4))
result = track_sequence(params, frames, [track_pixel])
print(f"tracked pixel {track_pixel}: d_hat per frame = {result.d_hat[:, 0].tolist()}")
plot_track(result, 0, "demo05_track.png")
result.to_csv(0, "demo05_track.csv")
print("wrote demo05_saliency.png, demo05_track.png, demo05_track.csv")
