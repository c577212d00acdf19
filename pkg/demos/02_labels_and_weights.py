"""How training targets are built: project atoms to a quarter-resolution
depth map, smooth it into concentric rings, and derive the loss weights
that counter the background class imbalance."""

import numpy as np

import depthseg as ds
from depthseg.viz import save_image_grid

profile = ds.SurfaceProfile(ds.ProfileKind.SAWTOOTH, base_depth=5, wedge_rows=1)
model = ds.generate_model(profile, image_shape=(128, 128), pitch=12.0, seed=3)

bundle = ds.build_label_bundle(model, out_shape=(32, 32))

raw = bundle.depth.labels
smoothed = bundle.smoothed.labels
weights = bundle.weights.w

print(f"raw map: {np.count_nonzero(raw)} column pixels, max depth {raw.max()}")
print(f"smoothed map: {np.count_nonzero(smoothed)} non-background pixels")
print(f"weights: min {weights.min():.3f} (floor), max {weights.max():.0f} at centers")

clean = ds.render(model, ds.default_contrast_curve())
save_image_grid(
    [
        ("clean image", clean.pixels),
        ("projected depths", raw),
        ("ring-smoothed labels", smoothed),
        ("loss weights", weights),
    ],
    "demo02_labels.png",
)
print("wrote demo02_labels.png")

# The smoothing rule: value at distance d from a column of depth k is
# max(0, k - floor(d / ring_px)); the center keeps its exact depth.
centers = ds.labels.column_centers(model, factor=4)
r, c, _ = centers[0]
print(f"label at first column center ({r:.0f},{c:.0f}): {smoothed[round(r), round(c)]}")
