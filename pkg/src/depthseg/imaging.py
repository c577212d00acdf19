"""Parametric image formation: atomic models to clean expected-count images.

A physics-grade scattering simulation is out of scope here; instead each
column contributes an isotropic Gaussian peak whose amplitude depends
non-linearly on depth and changes sign for thick columns (contrast
reversal), the two phenomena that make depth-from-intensity hard.  A
defocus-dependent multiplicative factor stands in for the intensity
modulation caused by drifting electron-optical conditions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .lattice import D_MAX, AtomicModel, Species
from .tensorio import read_tensor

# Defocus values are interpreted relative to this window (nm); the
# amplitude factor is cos(pi * (f - mid) / span), 1 at mid-window and 0 at
# the window edges.
DEFOCUS_MIN_NM = 1.0
DEFOCUS_MAX_NM = 9.0
_DEFOCUS_MID = 0.5 * (DEFOCUS_MIN_NM + DEFOCUS_MAX_NM)
_DEFOCUS_SPAN = DEFOCUS_MAX_NM - DEFOCUS_MIN_NM

DEFAULT_PIXEL_SIZE_PM = 5.3

# Fraction of signal energy that may be lost to clipping negative pixels
# before the curve/background combination is considered degenerate.
_MAX_CLIPPED_FRACTION = 0.10


class ImageSource(str, Enum):
    PROXY = "proxy"
    EXTERNAL = "external"


@dataclass(frozen=True)
class ImageMeta:
    defocus_nm: float
    pixel_size_pm: float
    source: ImageSource


@dataclass
class CleanImage:
    """Noise-free image; pixel values are expected counts per unit dose."""

    pixels: np.ndarray  # float32, 2D, >= 0
    meta: ImageMeta

    def validate(self) -> None:
        if self.pixels.ndim != 2:
            raise ValueError(f"expected 2D pixels, got shape {self.pixels.shape}")
        if not np.isfinite(self.pixels).all():
            raise ValueError("clean image contains non-finite pixels")
        if (self.pixels < 0).any():
            raise ValueError("clean image contains negative pixels")


@dataclass(frozen=True)
class ContrastCurve:
    """Depth -> peak amplitude for each species (index = atom count)."""

    heavy: np.ndarray
    light: np.ndarray

    def amplitude(self, species: Species, depth: int) -> float:
        table = self.heavy if species is Species.HEAVY else self.light
        return float(table[depth])

    @property
    def max_depth(self) -> int:
        return len(self.heavy) - 1


def default_contrast_curve(d_max: int = D_MAX) -> ContrastCurve:
    """Sinusoidal-in-depth amplitudes: zero for empty columns, peaking near
    mid thickness, then decaying through zero so the deepest columns show
    reversed contrast.  LIGHT columns follow the same shape at reduced
    magnitude.  The 6.5-atom half-period keeps every integer depth away
    from the zero crossing."""
    depths = np.arange(d_max + 1, dtype=float)
    shape = np.sin(math.pi * depths / 6.5)
    return ContrastCurve(heavy=0.8 * shape, light=0.28 * shape)


def defocus_factor(defocus_nm: float) -> float:
    """Smooth amplitude modulation over the defocus window."""
    return math.cos(math.pi * (defocus_nm - _DEFOCUS_MID) / _DEFOCUS_SPAN)


def render(
    model: AtomicModel,
    curve: ContrastCurve,
    defocus_nm: float = _DEFOCUS_MID,
    background: float = 1.0,
    psf_sigma_px: float = 3.0,
) -> CleanImage:
    """Render the clean image for ``model``.

    image = background + factor(defocus) * sum_k amp(species_k, depth_k) *
    G(pos_k, sigma) with G a unit-peak Gaussian, clipped at zero.  Raises if
    clipping would destroy more than 10% of the signal energy, which signals
    a degenerate curve/background combination rather than a usable image.
    """
    if background <= 0:
        raise ValueError("background must be > 0")
    if psf_sigma_px <= 0:
        raise ValueError("psf_sigma_px must be > 0")
    h, w = model.image_shape
    raw = np.full((h, w), float(background), dtype=np.float64)
    factor = defocus_factor(defocus_nm)
    radius = int(math.ceil(6.0 * psf_sigma_px))
    two_sigma_sq = 2.0 * psf_sigma_px * psf_sigma_px

    for c in model.columns:
        amp = factor * curve.amplitude(c.species, c.depth)
        if amp == 0.0:
            continue
        r0, c0 = c.row, c.col
        rlo = max(0, int(math.floor(r0)) - radius)
        rhi = min(h, int(math.ceil(r0)) + radius + 1)
        clo = max(0, int(math.floor(c0)) - radius)
        chi = min(w, int(math.ceil(c0)) + radius + 1)
        rr = np.arange(rlo, rhi, dtype=np.float64)[:, None] - r0
        cc = np.arange(clo, chi, dtype=np.float64)[None, :] - c0
        raw[rlo:rhi, clo:chi] += amp * np.exp(-(rr * rr + cc * cc) / two_sigma_sq)

    clipped = float(np.maximum(-raw, 0.0).sum())
    signal = float(np.abs(raw - background).sum())
    if signal > 0 and clipped > _MAX_CLIPPED_FRACTION * signal:
        raise ValueError(
            f"clipping would remove {clipped / signal:.1%} of signal energy; "
            "contrast curve and background are incompatible"
        )
    pixels = np.clip(raw, 0.0, None).astype(np.float32)
    img = CleanImage(
        pixels=pixels,
        meta=ImageMeta(defocus_nm=float(defocus_nm),
                       pixel_size_pm=DEFAULT_PIXEL_SIZE_PM,
                       source=ImageSource.PROXY),
    )
    img.validate()
    return img


def ingest_external(path: str | Path) -> CleanImage:
    """Load an externally simulated clean image from a tensor container."""
    pixels = read_tensor(path)
    if pixels.ndim != 2:
        raise ValueError(f"{path}: expected a 2D image, got shape {pixels.shape}")
    if not np.isfinite(pixels).all():
        raise ValueError(f"{path}: image contains non-finite pixels")
    if (pixels < 0).any():
        raise ValueError(f"{path}: image contains negative pixels")
    img = CleanImage(
        pixels=pixels.astype(np.float32),
        meta=ImageMeta(defocus_nm=float("nan"),
                       pixel_size_pm=DEFAULT_PIXEL_SIZE_PM,
                       source=ImageSource.EXTERNAL),
    )
    img.validate()
    return img
