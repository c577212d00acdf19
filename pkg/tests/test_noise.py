import numpy as np
import pytest

from depthseg.imaging import CleanImage, ImageMeta, ImageSource
from depthseg.noise import corrupt, derive_noise_seed, empirical_snr


def _clean(pixels):
    return CleanImage(
        pixels=np.asarray(pixels, dtype=np.float32),
        meta=ImageMeta(defocus_nm=5.0, pixel_size_pm=5.3, source=ImageSource.PROXY),
    )


def test_zero_clean_gives_zero_noisy():
    clean = _clean(np.zeros((16, 16)))
    for lam in (0.1, 2.5, 100.0):
        noisy = corrupt(clean, lam, seed=3)
        assert np.all(noisy.pixels == 0.0)


def test_mean_and_snr_law():
    # constant image of ones: mean stays 1, mean/std approaches sqrt(lambda)
    lam = 2.5
    clean = _clean(np.ones((1000, 1000)))
    noisy = corrupt(clean, lam, seed=11)
    draws = noisy.pixels.reshape(-1)
    assert abs(draws.mean() - 1.0) < 0.01
    ratio = draws.mean() / draws.std(ddof=1)
    assert abs(ratio - np.sqrt(lam)) < 0.02 * np.sqrt(lam)


def test_determinism_and_seed_sensitivity():
    clean = _clean(np.full((32, 32), 1.7))
    a = corrupt(clean, 2.5, seed=42)
    b = corrupt(clean, 2.5, seed=42)
    c = corrupt(clean, 2.5, seed=43)
    assert np.array_equal(a.pixels, b.pixels)
    assert not np.array_equal(a.pixels, c.pixels)


def test_scaled_counts_are_integers(rng):
    clean = _clean(rng.uniform(0.0, 3.0, size=(40, 40)))
    lam = 0.7
    noisy = corrupt(clean, lam, seed=9)
    counts = noisy.pixels * lam
    assert np.allclose(counts, np.round(counts), atol=1e-9)
    assert (noisy.pixels >= 0).all()


def test_invalid_inputs_rejected():
    clean = _clean(np.ones((4, 4)))
    with pytest.raises(ValueError, match="lambda"):
        corrupt(clean, 0.0, seed=0)
    with pytest.raises(ValueError, match="lambda"):
        corrupt(clean, -1.0, seed=0)
    bad = _clean(np.ones((4, 4)))
    bad.pixels = bad.pixels.copy()
    bad.pixels[0, 0] = -0.1
    with pytest.raises(ValueError, match=">= 0"):
        corrupt(bad, 1.0, seed=0)


def test_empirical_snr_constant_field():
    clean = _clean(np.full((2, 2), 4.0))
    samples = [corrupt(clean, 1.0, seed=s) for s in range(100_000)]
    snr = empirical_snr(samples, clean)
    assert np.all(np.abs(snr - 2.0) <= 0.03 * 2.0)  # sqrt(lambda * c) = 2


def test_empirical_snr_zero_region_missing():
    pixels = np.zeros((2, 2))
    pixels[0, 0] = 2.0
    clean = _clean(pixels)
    samples = [corrupt(clean, 1.0, seed=s) for s in range(200)]
    snr = empirical_snr(samples, clean)
    assert np.isnan(snr[1, 1])
    assert np.isfinite(snr[0, 0])


def test_empirical_snr_preconditions():
    clean = _clean(np.ones((2, 2)))
    one = corrupt(clean, 1.0, seed=0)
    with pytest.raises(ValueError, match="at least 2"):
        empirical_snr([one], clean)
    other_shape = corrupt(_clean(np.ones((3, 3))), 1.0, seed=1)
    with pytest.raises(ValueError, match="shape"):
        empirical_snr([one, other_shape], clean)
    mixed = corrupt(clean, 2.0, seed=2)
    with pytest.raises(ValueError, match="lambda"):
        empirical_snr([one, mixed], clean)


def test_snr_monotone_in_lambda():
    clean = _clean(np.full((64, 64), 1.3))
    lo = [corrupt(clean, 0.1, seed=s) for s in range(200)]
    hi = [corrupt(clean, 10.0, seed=s) for s in range(200)]
    snr_lo = np.nanmean(empirical_snr(lo, clean))
    snr_hi = np.nanmean(empirical_snr(hi, clean))
    assert snr_hi > snr_lo


def test_derive_noise_seed_distinct_streams():
    base = 7
    seen = set()
    for sample in range(5):
        for epoch in range(5):
            for stream in range(3):
                seen.add(derive_noise_seed(base, sample, epoch, stream))
    assert len(seen) == 75
    assert derive_noise_seed(base, 2, 3, 1) == derive_noise_seed(base, 2, 3, 1)
