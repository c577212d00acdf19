import math

import numpy as np
import pytest

from depthseg.imaging import (
    CleanImage,
    ContrastCurve,
    ImageSource,
    default_contrast_curve,
    defocus_factor,
    ingest_external,
    render,
)
from depthseg.lattice import AtomicModel, Column, Species
from depthseg.tensorio import write_tensor


def _model(columns, shape=(64, 64)):
    return AtomicModel(columns=columns, lattice_pitch_px=8.0, image_shape=shape)


def _col(row, col, depth=5, species=Species.HEAVY):
    return Column(row=float(row), col=float(col), species=species, depth=depth)


def test_empty_model_renders_constant_background():
    img = render(_model([]), default_contrast_curve(), background=1.5)
    assert img.pixels.shape == (64, 64)
    assert np.all(img.pixels == np.float32(1.5))


def test_single_column_peak_equals_background_plus_amplitude():
    curve = default_contrast_curve()
    img = render(_model([_col(32, 20, depth=3)]), curve, background=1.0)
    amp = curve.amplitude(Species.HEAVY, 3)  # defocus factor is 1 at mid-window
    peak = img.pixels.max()
    assert img.pixels[32, 20] == peak
    assert math.isclose(peak, 1.0 + amp, rel_tol=1e-6)


def test_two_separated_columns_sum_linearly():
    curve = default_contrast_curve()
    a, b = _col(20, 16, depth=4), _col(44, 48, depth=7)
    both = render(_model([a, b]), curve).pixels.astype(np.float64)
    only_a = render(_model([a]), curve).pixels.astype(np.float64)
    only_b = render(_model([b]), curve).pixels.astype(np.float64)
    np.testing.assert_allclose(both, only_a + only_b - 1.0, atol=1e-6)


def test_linear_in_curve_amplitudes():
    curve = default_contrast_curve()
    half = ContrastCurve(heavy=curve.heavy / 2, light=curve.light / 2)
    cols = [_col(20, 20, 4), _col(40, 40, 3, Species.LIGHT)]
    full_img = render(_model(cols), curve, background=2.0).pixels.astype(np.float64)
    half_img = render(_model(cols), half, background=2.0).pixels.astype(np.float64)
    np.testing.assert_allclose(half_img - 2.0, (full_img - 2.0) / 2, atol=1e-6)


def test_energy_above_background_matches_gaussian_mass():
    # single positive peak well inside the image (>= 3 sigma from borders)
    curve = default_contrast_curve()
    sigma = 3.0
    img = render(_model([_col(32, 32, depth=3)], shape=(64, 64)), curve,
                 psf_sigma_px=sigma)
    total = float((img.pixels.astype(np.float64) - 1.0).sum())
    expected = curve.amplitude(Species.HEAVY, 3) * 2.0 * math.pi * sigma * sigma
    assert abs(total - expected) <= 0.01 * abs(expected)


def test_default_curve_contrast_reversal_and_species_ordering():
    curve = default_contrast_curve()
    assert np.sign(curve.heavy[2]) != np.sign(curve.heavy[10])
    assert curve.heavy[0] == 0.0 and curve.light[0] == 0.0
    for d in range(1, 11):
        assert abs(curve.light[d]) < abs(curve.heavy[d])
    # rises to a mid-depth maximum, decreasing afterward
    peak = int(np.argmax(curve.heavy))
    assert 2 <= peak <= 5
    assert curve.heavy[10] < curve.heavy[peak]


def test_defocus_modulates_amplitude():
    curve = default_contrast_curve()
    model = _model([_col(32, 32, depth=3)])
    mid = render(model, curve, defocus_nm=5.0).pixels.astype(np.float64)
    near_edge = render(model, curve, defocus_nm=2.0).pixels.astype(np.float64)
    f = defocus_factor(2.0)
    np.testing.assert_allclose(near_edge - 1.0, f * (mid - 1.0), atol=1e-6)
    assert defocus_factor(5.0) == 1.0
    assert abs(defocus_factor(1.0)) < 1e-12 and abs(defocus_factor(9.0)) < 1e-12


def test_degenerate_clipping_rejected():
    bad = ContrastCurve(heavy=np.full(11, -5.0), light=np.full(11, -5.0))
    with pytest.raises(ValueError, match="clipping"):
        render(_model([_col(32, 32, depth=3)]), bad, background=0.1)


def test_render_parameter_validation():
    model = _model([])
    curve = default_contrast_curve()
    with pytest.raises(ValueError):
        render(model, curve, background=0.0)
    with pytest.raises(ValueError):
        render(model, curve, psf_sigma_px=-1.0)


def test_ingest_ones(tmp_path):
    path = tmp_path / "ones.tns"
    write_tensor(path, np.ones((64, 64), dtype=np.float32))
    img = ingest_external(path)
    assert img.meta.source is ImageSource.EXTERNAL
    assert np.all(img.pixels == 1.0)


def test_ingest_rejects_negative_and_non_2d(tmp_path):
    bad = np.ones((8, 8), dtype=np.float32)
    bad[3, 3] = -0.5
    path = tmp_path / "neg.tns"
    write_tensor(path, bad)
    with pytest.raises(ValueError, match="negative"):
        ingest_external(path)
    path3 = tmp_path / "cube.tns"
    write_tensor(path3, np.ones((2, 2, 2), dtype=np.float32))
    with pytest.raises(ValueError, match="2D"):
        ingest_external(path3)


def test_render_write_ingest_round_trip_bit_identical(tmp_path):
    img = render(_model([_col(20, 30, 6), _col(40, 40, 2, Species.LIGHT)]),
                 default_contrast_curve())
    path = tmp_path / "img.tns"
    write_tensor(path, img.pixels)
    back = ingest_external(path)
    assert back.pixels.dtype == img.pixels.dtype
    assert np.array_equal(back.pixels.view(np.uint8), img.pixels.view(np.uint8))


def test_clean_image_validation():
    img = CleanImage(pixels=np.full((4, 4), np.inf, dtype=np.float32), meta=None)
    with pytest.raises(ValueError, match="finite"):
        img.validate()
