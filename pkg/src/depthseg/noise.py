"""Scaled Poisson shot noise.

Each pixel of a noisy image is drawn as Poisson(lambda * c) / lambda from
the clean pixel value c, so the per-pixel mean stays c while the
mean-to-std ratio is sqrt(lambda * c): larger lambda means higher SNR.
Sampling uses the counter-based Philox generator keyed from an explicit
seed, so any (sample, epoch) noise realization can be replayed exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import CleanImage


@dataclass
class NoisyImage:
    pixels: np.ndarray  # float64; every value is k / lambda_ for integer k
    lambda_: float
    seed: int


def derive_noise_seed(base_seed: int, sample_id: int, epoch: int, stream: int = 0) -> int:
    """Stable per-(sample, epoch) seed for continuous noise sampling.

    Distinct (sample_id, epoch, stream) triples map to distinct noise
    realizations, and the mapping itself is a pure function of the
    arguments, so a training run can be replayed noise-for-noise from its
    base seed.  ``stream`` separates uses that share an epoch counter
    (training vs. validation vs. evaluation noise).
    """
    ss = np.random.SeedSequence(base_seed, spawn_key=(sample_id, epoch, stream))
    return int(ss.generate_state(1, np.uint64)[0])


def _poisson_scaled(clean_pixels: np.ndarray, lambda_: float, seed: int) -> np.ndarray:
    if lambda_ <= 0:
        raise ValueError(f"lambda_ must be > 0, got {lambda_}")
    if (clean_pixels < 0).any():
        raise ValueError("clean pixels must be >= 0")
    rng = np.random.Generator(np.random.Philox(seed))
    counts = rng.poisson(lambda_ * np.asarray(clean_pixels, dtype=np.float64))
    return counts / lambda_


def corrupt(clean: CleanImage, lambda_: float, seed: int) -> NoisyImage:
    """Draw one noisy realization of ``clean`` at noise level ``lambda_``."""
    pixels = _poisson_scaled(clean.pixels, lambda_, seed)
    return NoisyImage(pixels=pixels, lambda_=float(lambda_), seed=int(seed))


def empirical_snr(noisy_samples: list[NoisyImage], clean: CleanImage) -> np.ndarray:
    """Per-pixel sample-mean / sample-std over repeated noisy draws.

    Pixels whose draws never vary (e.g. clean value 0) have no defined
    ratio and come back as NaN.
    """
    if len(noisy_samples) < 2:
        raise ValueError("need at least 2 noisy samples")
    lam = noisy_samples[0].lambda_
    shape = clean.pixels.shape
    for s in noisy_samples:
        if s.pixels.shape != shape:
            raise ValueError(f"sample shape {s.pixels.shape} != clean shape {shape}")
        if s.lambda_ != lam:
            raise ValueError(f"mixed lambda values: {s.lambda_} vs {lam}")
    stack = np.stack([s.pixels for s in noisy_samples], axis=0)
    mean = stack.mean(axis=0)
    std = stack.std(axis=0, ddof=1)
    out = np.full(shape, np.nan)
    ok = std > 0
    out[ok] = mean[ok] / std[ok]
    return out
