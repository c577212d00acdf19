"""Input-gradient analysis: how sensitive is one output probability to each
input pixel, and how far does that sensitivity spread spatially?

The gradient is exact (autodiff through the whole network, including the
median filter, where the subgradient of the selected element applies).
The spread statistic is the gradient-magnitude-weighted RMS distance from
the queried pixel, a scalar proxy for how much long-range context the
model is using.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .network import ModelParameters, _as_input_tensor
from .tensorio import write_json, write_tensor


@dataclass
class SaliencyMap:
    """Signed input gradient of one output probability.

    ``grad`` has the input image's shape; ``pixel``/``depth`` identify the
    output probability that was differentiated; ``lambda_`` records the
    noise level of the input (NaN when unknown).
    """

    grad: np.ndarray
    pixel: tuple[int, int]
    depth: int
    lambda_: float
    output_shape: tuple[int, int]

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.grad)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        write_tensor(path, self.grad.astype(np.float64))
        write_json(path.with_suffix(".json"), {
            "pixel": list(self.pixel),
            "depth": self.depth,
            "lambda": None if np.isnan(self.lambda_) else self.lambda_,
            "output_shape": list(self.output_shape),
        })
        return path


def input_gradient(params: ModelParameters, y, pixel: tuple[int, int],
                   depth: int) -> SaliencyMap:
    """Exact gradient of probability[pixel][depth] w.r.t. every input pixel."""
    x = _as_input_tensor(params, y)
    module = params.module
    module.eval()
    x.requires_grad_(True)
    scores = module(x)
    n_classes = scores.shape[1]
    oh, ow = scores.shape[-2:]
    pr, pc = pixel
    if not (0 <= pr < oh and 0 <= pc < ow):
        raise ValueError(f"pixel {pixel} outside output shape {(oh, ow)}")
    if not (0 <= depth < n_classes):
        raise ValueError(f"depth {depth} outside [0, {n_classes})")
    prob = torch.softmax(scores, dim=1)[0, depth, pr, pc]
    prob.backward()
    grad = x.grad[0, 0].detach().numpy().astype(np.float64)
    lambda_ = getattr(y, "lambda_", float("nan"))
    return SaliencyMap(grad=grad, pixel=(pr, pc), depth=int(depth),
                       lambda_=float(lambda_), output_shape=(oh, ow))


def gradient_spread(smap: SaliencyMap) -> float:
    """Magnitude-weighted RMS distance (in input pixels) from the queried
    pixel's location at input resolution."""
    m = smap.magnitude
    total = m.sum()
    if total == 0:
        raise ValueError("all-zero saliency map has no spread")
    h, w = m.shape
    oh, ow = smap.output_shape
    fr, fc = h / oh, w / ow
    r0 = smap.pixel[0] * fr + (fr - 1) / 2.0
    c0 = smap.pixel[1] * fc + (fc - 1) / 2.0
    rr = np.arange(h, dtype=np.float64)[:, None] - r0
    cc = np.arange(w, dtype=np.float64)[None, :] - c0
    mean_sq = float((m * (rr * rr + cc * cc)).sum() / total)
    return float(np.sqrt(mean_sq))
