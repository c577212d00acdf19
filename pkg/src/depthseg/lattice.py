"""Synthetic 3D atomic models of nanoparticle surfaces.

A model is a set of atomic columns on an idealized two-species lattice:
a rectangular grid of HEAVY (cation-like) columns with LIGHT (anion-like)
columns interleaved at +/- quarter pitch horizontally, the projected
geometry one sees along a high-symmetry zone axis.  Each column carries an
integer depth (atom count).  Depths are constant in the bulk and taper off
toward the free surface at the top of the image, with the surface row
itself optionally modulated into a sawtooth or a step.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

D_MAX = 10
NUM_DEPTH_CLASSES = D_MAX + 1

MIN_PITCH_PX = 4.0


class Species(str, Enum):
    HEAVY = "heavy"
    LIGHT = "light"


class ProfileKind(str, Enum):
    FLAT = "flat"
    SAWTOOTH = "sawtooth"
    STEPPED = "stepped"


@dataclass(frozen=True)
class Column:
    """One atomic column: sub-pixel position, species, and atom count."""

    row: float
    col: float
    species: Species
    depth: int

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError(f"column depth must be >= 0, got {self.depth}")


@dataclass(frozen=True)
class SurfaceProfile:
    """Shape of the free surface: base thickness plus a near-surface wedge.

    ``wedge_rows`` is how many rows below the surface thin out linearly
    from the bulk thickness; 0 means the surface row is already at
    ``base_depth``.
    """

    kind: ProfileKind
    base_depth: int
    wedge_rows: int = 0

    def __post_init__(self):
        if self.base_depth < 1:
            raise ValueError("base_depth must be >= 1")
        if self.wedge_rows < 0:
            raise ValueError("wedge_rows must be >= 0")


@dataclass
class AtomicModel:
    """Column layout of one synthetic nanoparticle patch."""

    columns: list[Column]
    lattice_pitch_px: float
    image_shape: tuple[int, int]

    def validate(self, d_max: int = D_MAX) -> None:
        h, w = self.image_shape
        seen: set[tuple[int, int]] = set()
        for c in self.columns:
            if not (0 <= c.row < h and 0 <= c.col < w):
                raise ValueError(f"column at ({c.row}, {c.col}) outside {self.image_shape}")
            if not (0 <= c.depth <= d_max):
                raise ValueError(f"column depth {c.depth} outside [0, {d_max}]")
            px = (_round_half_up(c.row), _round_half_up(c.col))
            if px in seen:
                raise ValueError(f"two columns share pixel {px}")
            seen.add(px)

    def to_json_dict(self) -> dict:
        return {
            "image_shape": list(self.image_shape),
            "pitch": self.lattice_pitch_px,
            "columns": [
                {"row": c.row, "col": c.col, "species": c.species.value, "depth": c.depth}
                for c in self.columns
            ],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "AtomicModel":
        cols = [
            Column(row=float(c["row"]), col=float(c["col"]),
                   species=Species(c["species"]), depth=int(c["depth"]))
            for c in doc["columns"]
        ]
        return cls(columns=cols, lattice_pitch_px=float(doc["pitch"]),
                   image_shape=tuple(int(v) for v in doc["image_shape"]))

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "AtomicModel":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _taper_depth(base_depth: int, row_from_surface: int, wedge_rows: int) -> int:
    """Linear thinning over the wedge: row r of the wedge gets a depth
    proportional to (r+1)/(wedge_rows+1), never below one atom."""
    if row_from_surface >= wedge_rows:
        return base_depth
    frac = (row_from_surface + 1) / (wedge_rows + 1)
    return max(1, _round_half_up(base_depth * frac))


def generate_model(
    profile: SurfaceProfile,
    image_shape: tuple[int, int],
    pitch: float,
    seed: int,
    *,
    occupancy: float = 1.0,
    depth_cap: int = D_MAX,
    top_margin_frac: float = 0.25,
    grid_align_px: float = 4.0,
) -> AtomicModel:
    """Build a deterministic atomic model for the given surface profile.

    The HEAVY sublattice is a rectangular grid with spacing ``pitch``; each
    HEAVY column gets LIGHT neighbors at +/- pitch/4 horizontally.  Row 0 of
    the grid is the free surface; everything above it is vacuum.  ``seed``
    fixes the step position / sawtooth phase, so equal arguments always
    produce the identical model.

    ``occupancy`` scales LIGHT-column depths relative to their HEAVY
    neighbor (partial anion occupancy).  ``depth_cap`` clamps all depths
    (useful for shallow training tasks).  ``grid_align_px`` snaps the grid
    origin to a pixel multiple (default: the label downsampling factor, so
    that HEAVY and LIGHT sublattices stay distinct in downsampled label
    maps when the pitch is also a multiple of it); set 0 to disable.
    """
    if pitch < MIN_PITCH_PX:
        raise ValueError(f"pitch must be >= {MIN_PITCH_PX} px to keep sublattices apart")
    if not (0.0 <= occupancy <= 1.0):
        raise ValueError("occupancy must lie in [0, 1]")
    h, w = image_shape
    rng = np.random.default_rng(seed)

    side = pitch / 2.0
    top = max(top_margin_frac * h, side)
    left = side
    if grid_align_px:
        top = math.ceil(top / grid_align_px) * grid_align_px
        left = math.ceil(left / grid_align_px) * grid_align_px
    heavy_rows = np.arange(top, h - 1 - side + 1e-9, pitch)
    heavy_cols = np.arange(left, w - 1 - side + 1e-9, pitch)
    if len(heavy_rows) < 2 or len(heavy_cols) < 2:
        raise ValueError(
            f"image_shape {image_shape} too small for a 2x2 HEAVY grid at pitch {pitch}"
        )

    base = min(profile.base_depth, depth_cap)
    row_depths = [_taper_depth(base, r, profile.wedge_rows) for r in range(len(heavy_rows))]

    # Lateral modulation of the surface row only.
    n_cols = len(heavy_cols)
    surface = np.full(n_cols, row_depths[0], dtype=int)
    if profile.kind is ProfileKind.SAWTOOTH:
        phase = int(rng.integers(0, 2))
        delta = np.where((np.arange(n_cols) + phase) % 2 == 0, 1, -1)
        surface = np.clip(surface + delta, 0, depth_cap)
    elif profile.kind is ProfileKind.STEPPED:
        step_at = int(rng.integers(1, n_cols))
        surface[step_at:] = np.maximum(surface[step_at:] - 1, 0)

    columns: list[Column] = []
    for i, y in enumerate(heavy_rows):
        for j, x in enumerate(heavy_cols):
            d = int(surface[j]) if i == 0 else row_depths[i]
            d = min(d, depth_cap)
            columns.append(Column(row=float(y), col=float(x), species=Species.HEAVY, depth=d))
            d_light = min(_round_half_up(occupancy * d), depth_cap)
            for dx in (-pitch / 4.0, pitch / 4.0):
                x_l = x + dx
                if 0 <= x_l < w:
                    columns.append(
                        Column(row=float(y), col=float(x_l), species=Species.LIGHT, depth=d_light)
                    )

    model = AtomicModel(columns=columns, lattice_pitch_px=float(pitch), image_shape=(h, w))
    model.validate(d_max=max(D_MAX, depth_cap))
    return model


@dataclass
class ModelStats:
    n_columns: int
    species_counts: dict[str, int]
    depth_histogram: np.ndarray = field(repr=False)


def model_stats(model: AtomicModel, d_max: int = D_MAX) -> ModelStats:
    """Column counts per species and a depth histogram (index = depth)."""
    counts = {s.value: 0 for s in Species}
    depths = []
    for c in model.columns:
        counts[c.species.value] += 1
        depths.append(c.depth)
    hist = np.bincount(depths, minlength=d_max + 1) if depths else np.zeros(d_max + 1, dtype=int)
    return ModelStats(
        n_columns=len(model.columns),
        species_counts=counts,
        depth_histogram=hist.astype(int),
    )
