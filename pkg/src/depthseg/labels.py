"""Segmentation targets: projected depth maps, ring smoothing, pixel weights.

The raw target is the per-pixel atom count obtained by projecting every
column onto the imaging plane.  That map is a field of isolated spikes, so
for training it is spread into concentric rings that step down by one
depth class per ``ring_px`` of distance from each column center.  A
companion weight map (1 at column centers, Gaussian falloff, floored above
zero) counters the background/column class imbalance in the loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import D_MAX, AtomicModel, Species, _round_half_up

DEFAULT_LABEL_FACTOR = 4
DEFAULT_RING_PX = 2
DEFAULT_WEIGHT_SIGMA_PX = 4.0
DEFAULT_WEIGHT_FLOOR = 0.05


@dataclass
class DepthMap:
    """Integer atom counts at label resolution; 0 is background."""

    labels: np.ndarray
    factor: int  # image pixels per label pixel along each axis (1 or 4)


@dataclass
class SmoothedLabelMap:
    labels: np.ndarray
    source: DepthMap


@dataclass
class WeightMap:
    w: np.ndarray


@dataclass
class LabelBundle:
    depth: DepthMap
    smoothed: SmoothedLabelMap
    weights: WeightMap


def project_depth(model: AtomicModel, out_shape: tuple[int, int], d_max: int = D_MAX) -> DepthMap:
    """Tally atoms per label pixel.

    Column positions are rescaled by the (integer) downsampling factor and
    rounded half-up per axis; a column's whole atom count lands on that one
    pixel.  Rounding at the high edge clamps into the map.  Totals are
    capped at ``d_max`` so collisions cannot leave the class range.
    """
    h, w = model.image_shape
    oh, ow = out_shape
    if h % oh or w % ow:
        raise ValueError(f"out_shape {out_shape} does not evenly divide {model.image_shape}")
    factor_r, factor_c = h // oh, w // ow
    if factor_r != factor_c or factor_r not in (1, 4):
        raise ValueError(f"downsampling factor must be 1 or 4, got ({factor_r}, {factor_c})")
    factor = factor_r

    labels = np.zeros(out_shape, dtype=np.int64)
    for c in model.columns:
        if not (0 <= c.row < h and 0 <= c.col < w):
            raise ValueError(f"column at ({c.row}, {c.col}) outside image bounds {model.image_shape}")
        r = min(_round_half_up(c.row / factor), oh - 1)
        k = min(_round_half_up(c.col / factor), ow - 1)
        labels[r, k] += c.depth
    np.minimum(labels, d_max, out=labels)
    return DepthMap(labels=labels, factor=factor)


def smooth_labels(depth: DepthMap, ring_px: int = DEFAULT_RING_PX) -> SmoothedLabelMap:
    """Spread each column's depth into concentric rings.

    s(p) = max over columns k of max(0, depth_k - floor(dist(p, k) / ring_px))
    with Euclidean distance in label pixels, so the value at a column
    center is its depth, steps down by one per ring, and reaches 0 at
    distance depth_k * ring_px.  Overlaps resolve by pointwise maximum.
    """
    if ring_px < 1:
        raise ValueError("ring_px must be >= 1")
    src = depth.labels
    out = np.zeros_like(src)
    oh, ow = src.shape
    for r0, c0 in zip(*np.nonzero(src)):
        d = int(src[r0, c0])
        reach = d * ring_px  # contribution is 0 at and beyond this radius
        rlo, rhi = max(0, r0 - reach), min(oh, r0 + reach + 1)
        clo, chi = max(0, c0 - reach), min(ow, c0 + reach + 1)
        rr = np.arange(rlo, rhi)[:, None] - r0
        cc = np.arange(clo, chi)[None, :] - c0
        dist = np.sqrt(rr * rr + cc * cc)
        contrib = np.maximum(0, d - np.floor(dist / ring_px).astype(np.int64))
        np.maximum(out[rlo:rhi, clo:chi], contrib, out=out[rlo:rhi, clo:chi])
    return SmoothedLabelMap(labels=out, source=depth)


def build_weights(
    depth: DepthMap,
    sigma_px: float = DEFAULT_WEIGHT_SIGMA_PX,
    w_floor: float = DEFAULT_WEIGHT_FLOOR,
) -> WeightMap:
    """Loss weights: w(p) = max(w_floor, max_k exp(-dist(p,k)^2 / 2 sigma^2)).

    Exactly 1 at column centers, never below ``w_floor`` anywhere.
    """
    if not (0 < w_floor < 1):
        raise ValueError("w_floor must lie in (0, 1)")
    if sigma_px <= 0:
        raise ValueError("sigma_px must be > 0")
    src = depth.labels
    oh, ow = src.shape
    w = np.full(src.shape, float(w_floor), dtype=np.float64)
    # Beyond this radius the Gaussian is below the floor and cannot win the max.
    reach = int(math.ceil(sigma_px * math.sqrt(2.0 * math.log(1.0 / w_floor)))) + 1
    two_sigma_sq = 2.0 * sigma_px * sigma_px
    for r0, c0 in zip(*np.nonzero(src)):
        rlo, rhi = max(0, r0 - reach), min(oh, r0 + reach + 1)
        clo, chi = max(0, c0 - reach), min(ow, c0 + reach + 1)
        rr = np.arange(rlo, rhi, dtype=np.float64)[:, None] - r0
        cc = np.arange(clo, chi, dtype=np.float64)[None, :] - c0
        gauss = np.exp(-(rr * rr + cc * cc) / two_sigma_sq)
        np.maximum(w[rlo:rhi, clo:chi], gauss, out=w[rlo:rhi, clo:chi])
    return WeightMap(w=w)


def build_label_bundle(
    model: AtomicModel,
    out_shape: tuple[int, int],
    *,
    ring_px: int = DEFAULT_RING_PX,
    sigma_px: float = DEFAULT_WEIGHT_SIGMA_PX,
    w_floor: float = DEFAULT_WEIGHT_FLOOR,
    d_max: int = D_MAX,
) -> LabelBundle:
    depth = project_depth(model, out_shape, d_max=d_max)
    return LabelBundle(
        depth=depth,
        smoothed=smooth_labels(depth, ring_px=ring_px),
        weights=build_weights(depth, sigma_px=sigma_px, w_floor=w_floor),
    )


def column_centers(model: AtomicModel, factor: int = DEFAULT_LABEL_FACTOR):
    """Column centers at label resolution as (row, col, species) triples.

    Depth-0 vacancy markers are skipped; they have no atoms to find.
    """
    return [
        (c.row / factor, c.col / factor, c.species)
        for c in model.columns
        if c.depth > 0
    ]


def center_disk_mask(
    shape: tuple[int, int],
    centers,
    heavy_radius: float = 4.0,
    light_radius: float = 3.0,
) -> np.ndarray:
    """Union of per-column disks used for center accuracy."""
    mask = np.zeros(shape, dtype=bool)
    oh, ow = shape
    for r0, c0, species in centers:
        radius = heavy_radius if species is Species.HEAVY else light_radius
        reach = int(math.ceil(radius))
        rlo, rhi = max(0, int(r0) - reach - 1), min(oh, int(r0) + reach + 2)
        clo, chi = max(0, int(c0) - reach - 1), min(ow, int(c0) + reach + 2)
        if rlo >= rhi or clo >= chi:
            continue
        rr = np.arange(rlo, rhi, dtype=np.float64)[:, None] - r0
        cc = np.arange(clo, chi, dtype=np.float64)[None, :] - c0
        mask[rlo:rhi, clo:chi] |= (rr * rr + cc * cc) <= radius * radius
    return mask
