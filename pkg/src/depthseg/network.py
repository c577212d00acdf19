"""UNet encoder-decoder with a downsampling classification head.

The backbone is a standard UNet: per-scale double 3x3 convolutions with
replication padding, batch normalization and ReLU; 2x2 max-pool on the way
down; bilinear upsampling (optionally transposed convolutions) with skip
concatenation on the way up.  Channel width doubles per scale from
``base_channels``.

The head turns full-resolution features into depth-class scores at 1/4 of
the input resolution: two stride-2 conv blocks, a 1x1 conv to the class
count, then a per-class median filter that suppresses single-pixel label
flips before the softmax.  The median runs on pre-softmax scores.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .lattice import NUM_DEPTH_CLASSES
from .noise import NoisyImage
from .tensorio import read_json, read_tensor, sha256_file, write_json, write_tensor

CHECKPOINT_VERSION = 1
HEAD_DOWNSAMPLE = 4  # two stride-2 blocks

_TORCH_NP_DTYPES = {
    torch.float32: np.float32,
    torch.float64: np.float64,
    torch.int64: np.int64,
}


@dataclass(frozen=True)
class ModelConfig:
    base_channels: int = 16
    scales: int = 6
    num_classes: int = NUM_DEPTH_CLASSES
    median_kernel: int = 4
    upsample: str = "bilinear"  # "bilinear" | "transposed"
    in_channels: int = 1
    # Per-scale widths double from base_channels up to width_cap_factor *
    # base_channels and are maintained from there on; 0 means uncapped
    # doubling at every scale.
    width_cap_factor: int = 8

    def __post_init__(self):
        if self.base_channels < 1 or self.scales < 1 or self.num_classes < 2:
            raise ValueError(f"invalid config {self}")
        if self.median_kernel < 1:
            raise ValueError("median_kernel must be >= 1")
        if self.upsample not in ("bilinear", "transposed"):
            raise ValueError(f"unknown upsample mode {self.upsample!r}")
        if self.width_cap_factor < 0:
            raise ValueError("width_cap_factor must be >= 0")

    def channels(self) -> list[int]:
        cap = self.width_cap_factor * self.base_channels if self.width_cap_factor else None
        widths = []
        for i in range(self.scales + 1):
            w = self.base_channels * (1 << i)
            widths.append(min(w, cap) if cap else w)
        return widths

    @property
    def min_input_px(self) -> int:
        return 1 << self.scales

    def to_json_dict(self) -> dict:
        return {
            "base_channels": self.base_channels,
            "scales": self.scales,
            "num_classes": self.num_classes,
            "median_kernel": self.median_kernel,
            "upsample": self.upsample,
            "in_channels": self.in_channels,
            "width_cap_factor": self.width_cap_factor,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ModelConfig":
        return cls(**doc)

    def digest(self) -> str:
        blob = json.dumps(self.to_json_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def median_filter(x, k: int):
    """Per-channel k x k running median with replicate-padded borders.

    The window for output pixel (i, j) spans k//2 pixels before and
    k-1-k//2 after it along each axis (for even k: 2 before, 1 after), and
    the median of the k*k values is the ceil(k^2 / 2)-th order statistic,
    i.e. the lower median when k*k is even.  Accepts torch tensors of shape
    [..., H, W] or a 2D numpy array (returned as numpy).
    """
    if k < 1:
        raise ValueError("median kernel must be >= 1")
    if isinstance(x, np.ndarray):
        t = torch.from_numpy(np.ascontiguousarray(x, dtype=np.float64))
        return median_filter(t, k).numpy()
    if k == 1:
        return x
    shape = x.shape
    t = x.reshape(1, -1, shape[-2], shape[-1])
    before, after = k // 2, k - 1 - k // 2
    t = F.pad(t, (before, after, before, after), mode="replicate")
    windows = t.unfold(2, k, 1).unfold(3, k, 1)  # [1, C, H, W, k, k]
    rank = math.ceil(k * k / 2)
    med = windows.reshape(*windows.shape[:4], k * k).kthvalue(rank, dim=-1).values
    return med.reshape(shape)


class DoubleConv(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(in_ch, out_ch, 3, padding=1, padding_mode="replicate"),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_ch, out_ch, 3, padding=1, padding_mode="replicate"),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.block(x)


class Up(nn.Module):
    """Upsample the coarser map to the skip's size, concatenate, convolve."""

    def __init__(self, skip_ch: int, lower_ch: int, mode: str):
        super().__init__()
        self.mode = mode
        if mode == "transposed":
            self.up = nn.ConvTranspose2d(lower_ch, skip_ch, 2, stride=2)
            self.conv = DoubleConv(2 * skip_ch, skip_ch)
        else:
            self.up = None
            self.conv = DoubleConv(skip_ch + lower_ch, skip_ch)

    def forward(self, lower, skip):
        if self.up is None:
            x = F.interpolate(lower, size=skip.shape[-2:], mode="bilinear",
                              align_corners=False)
        else:
            x = self.up(lower)
            dh = skip.shape[-2] - x.shape[-2]
            dw = skip.shape[-1] - x.shape[-1]
            if dh or dw:
                x = F.pad(x, (0, max(dw, 0), 0, max(dh, 0)), mode="replicate")
                x = x[..., : skip.shape[-2], : skip.shape[-1]]
        return self.conv(torch.cat([skip, x], dim=1))


class _Backbone(nn.Module):
    """Shared UNet trunk producing full-resolution feature maps."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        chs = config.channels()
        self.inc = DoubleConv(config.in_channels, chs[0])
        self.downs = nn.ModuleList(DoubleConv(chs[i], chs[i + 1]) for i in range(config.scales))
        self.ups = nn.ModuleList(
            Up(chs[i], chs[i + 1], config.upsample) for i in reversed(range(config.scales))
        )
        self.pool = nn.MaxPool2d(2)

    def forward(self, x):
        skips = [self.inc(x)]
        for down in self.downs:
            skips.append(down(self.pool(skips[-1])))
        x = skips[-1]
        for up, skip in zip(self.ups, reversed(skips[:-1])):
            x = up(x, skip)
        return x


class DepthNet(nn.Module):
    """Full model: backbone + stride-2 head + per-class median filter.

    ``forward`` returns pre-softmax class scores of shape
    [B, num_classes, H/4, W/4]; apply softmax over dim 1 for probabilities.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        b = config.base_channels
        self.backbone = _Backbone(config)
        self.head = nn.Sequential(
            nn.Conv2d(b, 2 * b, 3, stride=2, padding=1, padding_mode="replicate"),
            nn.BatchNorm2d(2 * b),
            nn.ReLU(inplace=True),
            nn.Conv2d(2 * b, 4 * b, 3, stride=2, padding=1, padding_mode="replicate"),
            nn.BatchNorm2d(4 * b),
            nn.ReLU(inplace=True),
            nn.Conv2d(4 * b, config.num_classes, 1),
        )

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.config.in_channels:
            raise ValueError(f"expected [B, {self.config.in_channels}, H, W], got {tuple(x.shape)}")
        if min(x.shape[-2:]) < self.config.min_input_px:
            raise ValueError(
                f"spatial dims {tuple(x.shape[-2:])} below minimum "
                f"{self.config.min_input_px} for {self.config.scales} scales"
            )
        scores = self.head(self.backbone(x))
        return median_filter(scores, self.config.median_kernel)


class DenoiseNet(nn.Module):
    """UNet regressor at full resolution (for the denoise-first baselines).

    Predicts a residual added to its input, so the untrained network starts
    at the identity map and training spends its budget on actual denoising
    rather than on reconstructing the mean intensity.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.backbone = _Backbone(config)
        self.out = nn.Conv2d(config.base_channels, 1, 1)

    def forward(self, x):
        if min(x.shape[-2:]) < self.config.min_input_px:
            raise ValueError("input smaller than the network's minimum size")
        return x + self.out(self.backbone(x))


@dataclass
class ProbabilityMap:
    """Per-pixel categorical distribution over depth classes, [h, w, C]."""

    probs: np.ndarray

    def validate(self, atol: float = 1e-6) -> None:
        if (self.probs < 0).any():
            raise ValueError("probabilities must be non-negative")
        sums = self.probs.sum(axis=-1)
        if not np.allclose(sums, 1.0, atol=atol):
            raise ValueError(f"pixel distributions do not sum to 1 (max err {np.abs(sums - 1).max():.2e})")


@dataclass
class DepthEstimate:
    """Argmax depths and their confidences (the winning probability)."""

    d_hat: np.ndarray
    confidence: np.ndarray


@dataclass
class ModelParameters:
    """A trained (or freshly initialized) network plus its configuration."""

    config: ModelConfig
    module: nn.Module
    name: str = ""
    version: int = CHECKPOINT_VERSION

    def validate_finite(self) -> None:
        for key, tensor in self.module.state_dict().items():
            if tensor.is_floating_point() and not torch.isfinite(tensor).all():
                raise ValueError(f"parameter {key} contains NaN/Inf")


def build_model(config: ModelConfig, seed: int = 0, *, kind: str = "segmenter",
                name: str = "") -> ModelParameters:
    """Deterministically initialize a network for ``config``."""
    torch.manual_seed(seed)
    module = DepthNet(config) if kind == "segmenter" else DenoiseNet(config)
    module.eval()
    params = ModelParameters(config=config, module=module,
                             name=name or f"b{config.base_channels}")
    return params


def count_parameters(obj) -> int:
    module = obj.module if isinstance(obj, ModelParameters) else obj
    return sum(p.numel() for p in module.parameters())


def _as_input_tensor(params: ModelParameters, y) -> torch.Tensor:
    pixels = y.pixels if isinstance(y, NoisyImage) else np.asarray(y)
    if pixels.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {pixels.shape}")
    if not np.isfinite(pixels).all():
        raise ValueError("input image contains non-finite values")
    dtype = next(params.module.parameters()).dtype
    return torch.from_numpy(np.ascontiguousarray(pixels)).to(dtype)[None, None]


def forward(params: ModelParameters, y) -> ProbabilityMap:
    """Inference on one image; returns [H/4, W/4, num_classes] probabilities."""
    params.module.eval()
    with torch.no_grad():
        scores = params.module(_as_input_tensor(params, y))
        probs = torch.softmax(scores, dim=1)
    return ProbabilityMap(probs=probs[0].permute(1, 2, 0).numpy())


def forward_batch(params: ModelParameters, pixel_stack: np.ndarray,
                  batch_size: int = 8) -> np.ndarray:
    """Probabilities for a stack of images, [N, h, w, C]."""
    params.module.eval()
    dtype = next(params.module.parameters()).dtype
    outs = []
    with torch.no_grad():
        for i in range(0, len(pixel_stack), batch_size):
            t = torch.from_numpy(np.ascontiguousarray(pixel_stack[i : i + batch_size]))
            probs = torch.softmax(params.module(t.to(dtype)[:, None]), dim=1)
            outs.append(probs.permute(0, 2, 3, 1).numpy())
    return np.concatenate(outs, axis=0)


def estimate_from_probs(probs: np.ndarray) -> DepthEstimate:
    """Argmax with ties resolved toward the smaller depth class."""
    d_hat = np.argmax(probs, axis=-1)
    confidence = np.take_along_axis(probs, d_hat[..., None], axis=-1)[..., 0]
    return DepthEstimate(d_hat=d_hat.astype(np.int64), confidence=confidence)


def predict(params: ModelParameters, y) -> DepthEstimate:
    return estimate_from_probs(forward(params, y).probs)


def save_checkpoint(params: ModelParameters, ckpt_dir: str | Path) -> Path:
    """Write config + every state tensor as containers + hash manifest."""
    ckpt_dir = Path(ckpt_dir)
    (ckpt_dir / "tensors").mkdir(parents=True, exist_ok=True)
    kind = "denoiser" if isinstance(params.module, DenoiseNet) else "segmenter"
    config_doc = {
        "version": params.version,
        "name": params.name,
        "kind": kind,
        "config": params.config.to_json_dict(),
    }
    write_json(ckpt_dir / "config.json", config_doc)
    tensors = {}
    for idx, (key, tensor) in enumerate(sorted(params.module.state_dict().items())):
        np_dtype = _TORCH_NP_DTYPES.get(tensor.dtype)
        if np_dtype is None:
            raise ValueError(f"cannot serialize tensor {key} with dtype {tensor.dtype}")
        rel = f"tensors/{idx:04d}.tns"
        path = ckpt_dir / rel
        write_tensor(path, tensor.detach().cpu().numpy().astype(np_dtype))
        tensors[key] = {"file": rel, "sha256": sha256_file(path)}
    manifest = {
        "version": params.version,
        "config_sha256": params.config.digest(),
        "tensors": tensors,
    }
    write_json(ckpt_dir / "manifest.json", manifest)
    return ckpt_dir


def load_checkpoint(ckpt_dir: str | Path) -> ModelParameters:
    """Load and verify a checkpoint directory written by save_checkpoint."""
    ckpt_dir = Path(ckpt_dir)
    config_doc = read_json(ckpt_dir / "config.json")
    manifest = read_json(ckpt_dir / "manifest.json")
    config = ModelConfig.from_json_dict(config_doc["config"])
    if manifest["config_sha256"] != config.digest():
        raise ValueError(f"{ckpt_dir}: config hash mismatch")
    module = DepthNet(config) if config_doc.get("kind", "segmenter") == "segmenter" else DenoiseNet(config)
    reference = module.state_dict()
    state = {}
    for key, entry in manifest["tensors"].items():
        path = ckpt_dir / entry["file"]
        if sha256_file(path) != entry["sha256"]:
            raise ValueError(f"{ckpt_dir}: content hash mismatch for {key}")
        arr = read_tensor(path)
        if key not in reference:
            raise ValueError(f"{ckpt_dir}: unexpected tensor {key}")
        tensor = torch.from_numpy(arr).to(reference[key].dtype).reshape(reference[key].shape)
        state[key] = tensor
    module.load_state_dict(state, strict=True)
    module.eval()
    params = ModelParameters(config=config, module=module,
                             name=config_doc.get("name", ""),
                             version=int(config_doc.get("version", CHECKPOINT_VERSION)))
    params.validate_finite()
    return params
