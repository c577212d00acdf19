import numpy as np
import pytest
import torch

import depthseg as ds
from depthseg.network import ModelConfig, build_model


def finite_difference_check(params, img, pixel, depth, rng, *, n_target,
                            h=1e-4, rel_tol=1e-3, max_draws=4000):
    """Compare the autodiff input gradient against central differences.

    Returns (n_checked, max_rel_err).  Pixels whose one-sided derivatives
    disagree are skipped: the network is only piecewise smooth (ReLU,
    max-pool, median), and central differences are meaningless across a
    kink.  Pixels with negligible gradient are also skipped, since a
    relative error has no scale there.
    """
    from depthseg.saliency import input_gradient

    smap = input_gradient(params, img, pixel, depth)
    grad = smap.grad
    scale = np.abs(grad).max()
    assert scale > 0, "gradient identically zero; check the setup"
    module = params.module

    def f(arr):
        with torch.no_grad():
            t = torch.from_numpy(arr)[None, None]
            probs = torch.softmax(module(t), dim=1)
            return float(probs[0, depth, pixel[0], pixel[1]])

    f0 = f(img)
    checked = 0
    max_rel = 0.0
    h_, w_ = img.shape
    for r, c in zip(rng.integers(0, h_, max_draws), rng.integers(0, w_, max_draws)):
        if checked >= n_target:
            break
        if abs(grad[r, c]) < 1e-4 * scale:
            continue
        up, down = img.copy(), img.copy()
        up[r, c] += h
        down[r, c] -= h
        f_up, f_down = f(up), f(down)
        fwd = (f_up - f0) / h
        bwd = (f0 - f_down) / h
        if abs(fwd - bwd) > 1e-2 * max(abs(fwd), abs(bwd), 1e-12):
            continue  # kink inside the window
        fd = (f_up - f_down) / (2 * h)
        rel = abs(fd - grad[r, c]) / max(abs(fd), abs(grad[r, c]))
        max_rel = max(max_rel, rel)
        assert rel < rel_tol, f"pixel ({r},{c}): fd {fd:.6e} vs grad {grad[r, c]:.6e}"
        checked += 1
    return checked, max_rel


@pytest.fixture(scope="session")
def tiny_config():
    return ModelConfig(base_channels=4, scales=2)


@pytest.fixture(scope="session")
def tiny_params(tiny_config):
    return build_model(tiny_config, seed=0)


@pytest.fixture(scope="session")
def tiny_dataset():
    """16 small images for fast training/eval tests."""
    cfg = ds.SynthesisConfig(
        n_samples=16, seed=5, image_shape=(64, 64), depth_cap=5,
        base_depth_range=(3, 5), wedge_rows_range=(1, 2),
    )
    return ds.synthesize_dataset(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
