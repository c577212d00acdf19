"""Training loops: weighted cross-entropy segmentation plus the two
denoise-first baselines.

The segmentation loss is a weighted negative log-likelihood summed over
batch and pixels (no normalizer): for each pixel the log-probability of
its smoothed target class, scaled by the pixel's weight.  Every epoch
draws a fresh, seeded noise realization of each training image
(continuous noise sampling), so the network never sees the same noise
twice; validation noise is frozen so early stopping compares like with
like.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .data import SampleSet
from .network import DenoiseNet, DepthNet, ModelConfig, ModelParameters
from .noise import _poisson_scaled, derive_noise_seed

# Noise stream tags (third component of the seed derivation).
TRAIN_STREAM = 0
VAL_STREAM = 1
EVAL_STREAM = 2

_PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    lambda_: float = 2.5
    batch_size: int = 8
    max_epochs: int = 200
    lr: float = 1e-3
    lr_factor: float = 0.5
    lr_patience: int = 5
    patience: int = 10
    seed: int = 0
    n_train: int = 500
    n_val: int = 100

    def __post_init__(self):
        if self.batch_size < 1 or self.patience < 1 or self.lambda_ <= 0:
            raise ValueError(f"invalid training config {self}")

    def to_json_dict(self) -> dict:
        return {
            "lambda_": self.lambda_,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "lr": self.lr,
            "lr_factor": self.lr_factor,
            "lr_patience": self.lr_patience,
            "patience": self.patience,
            "seed": self.seed,
            "n_train": self.n_train,
            "n_val": self.n_val,
        }


@dataclass
class TrainRecord:
    """Per-epoch losses (mean per image) and the early-stopping outcome."""

    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0  # 1-based
    wall_clock_s: float = 0.0

    @property
    def best_val_loss(self) -> float:
        return min(self.val_loss) if self.val_loss else float("nan")

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        lines = ["epoch,train_loss,val_loss"]
        for e, (tr, va) in enumerate(zip(self.train_loss, self.val_loss), start=1):
            lines.append(f"{e},{tr:.6f},{va:.6f}")
        path.write_text("\n".join(lines) + "\n")
        return path


def weighted_ce(probs, labels, weights) -> float:
    """Weighted negative log-likelihood of the target classes, summed.

    ``probs`` has a trailing class axis; ``labels`` and ``weights`` share
    its leading shape.  Probabilities are clamped at 1e-12 before the log.
    Accepts single maps or batches.
    """
    p = np.asarray(probs, dtype=np.float64)
    s = np.asarray(labels)
    w = np.asarray(weights, dtype=np.float64)
    if p.shape[:-1] != s.shape or s.shape != w.shape:
        raise ValueError(f"shape mismatch: probs {p.shape}, labels {s.shape}, weights {w.shape}")
    if s.size == 0:
        raise ValueError("empty label map")
    n_classes = p.shape[-1]
    if (s < 0).any() or (s >= n_classes).any():
        raise ValueError(f"labels outside [0, {n_classes})")
    p_true = np.take_along_axis(p, s[..., None].astype(np.int64), axis=-1)[..., 0]
    return float(-(w * np.log(np.clip(p_true, _PROB_FLOOR, None))).sum() + 0.0)


def _weighted_ce_scores(scores: torch.Tensor, labels: torch.Tensor,
                        weights: torch.Tensor) -> torch.Tensor:
    """Same loss on pre-softmax scores [B, C, h, w] (numerically stable)."""
    logp = F.log_softmax(scores, dim=1)
    lp_true = logp.gather(1, labels[:, None]).squeeze(1)
    return -(weights * lp_true).sum()


def _noisy_batch(ds: SampleSet, indices, lambda_: float, base_seed: int,
                 epoch: int, stream: int) -> torch.Tensor:
    stack = np.stack([
        _poisson_scaled(ds.clean[i], lambda_,
                        derive_noise_seed(base_seed, ds.seeds[i], epoch, stream))
        for i in indices
    ]).astype(np.float32)
    return torch.from_numpy(stack)[:, None]


def _check_sets(train_set: SampleSet, val_set: SampleSet) -> None:
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("train and validation sets must be non-empty")
    overlap = set(train_set.ids) & set(val_set.ids)
    if overlap:
        raise ValueError(f"train/validation sets overlap: {sorted(overlap)[:3]}...")


def _epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xE0, epoch)))
    return rng.permutation(n)


class _EarlyStopper:
    """Track the best validation loss and a snapshot of the best weights."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = float("inf")
        self.best_epoch = 0
        self.best_state = None
        self.stale = 0

    def step(self, epoch: int, val_loss: float, module: nn.Module) -> bool:
        """Returns True when training should stop."""
        if val_loss < self.best:
            self.best = val_loss
            self.best_epoch = epoch
            self.best_state = copy.deepcopy(module.state_dict())
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience


def _finish(module: nn.Module, stopper: _EarlyStopper) -> None:
    if stopper.best_state is not None:
        module.load_state_dict(stopper.best_state)
    module.eval()


def _abort_if_bad(loss: torch.Tensor, epoch: int, what: str) -> None:
    if not torch.isfinite(loss):
        raise RuntimeError(f"non-finite {what} loss at epoch {epoch}; aborting")


def train(
    config: TrainConfig,
    model_config: ModelConfig,
    train_set: SampleSet,
    val_set: SampleSet,
    *,
    verbose: bool = False,
) -> tuple[ModelParameters, TrainRecord]:
    """Train a segmentation network; returns the best-validation weights.

    Fresh noise is drawn per (sample, epoch); validation noise is fixed.
    Two runs with identical arguments produce identical loss traces.
    """
    _check_sets(train_set, val_set)
    torch.manual_seed(config.seed)
    model = DepthNet(model_config)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    sched = torch.optim.lr_scheduler.ReduceLROnPlateau(
        opt, factor=config.lr_factor, patience=config.lr_patience)
    labels_t = torch.from_numpy(train_set.labels)
    weights_t = torch.from_numpy(train_set.weights)
    val_labels = torch.from_numpy(val_set.labels)
    val_weights = torch.from_numpy(val_set.weights)
    val_noisy = _noisy_batch(val_set, range(len(val_set)), config.lambda_,
                             config.seed, 0, VAL_STREAM)

    record = TrainRecord()
    stopper = _EarlyStopper(config.patience)
    t0 = time.time()
    for epoch in range(1, config.max_epochs + 1):
        model.train()
        order = _epoch_order(config.seed, epoch, len(train_set))
        total = 0.0
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo : lo + config.batch_size]
            noisy = _noisy_batch(train_set, idx, config.lambda_, config.seed,
                                 epoch, TRAIN_STREAM)
            opt.zero_grad()
            loss = _weighted_ce_scores(model(noisy), labels_t[idx], weights_t[idx])
            _abort_if_bad(loss, epoch, "training")
            loss.backward()
            opt.step()
            total += loss.item()
        train_loss = total / len(train_set)

        model.eval()
        with torch.no_grad():
            vtotal = 0.0
            for lo in range(0, len(val_set), config.batch_size):
                sl = slice(lo, lo + config.batch_size)
                vloss = _weighted_ce_scores(model(val_noisy[sl]), val_labels[sl], val_weights[sl])
                _abort_if_bad(vloss, epoch, "validation")
                vtotal += float(vloss)
        val_loss = vtotal / len(val_set)

        record.train_loss.append(train_loss)
        record.val_loss.append(val_loss)
        sched.step(val_loss)
        if verbose:
            print(f"epoch {epoch:3d}  train {train_loss:10.2f}  val {val_loss:10.2f}")
        if stopper.step(epoch, val_loss, model):
            break

    _finish(model, stopper)
    record.best_epoch = stopper.best_epoch
    record.wall_clock_s = time.time() - t0
    params = ModelParameters(config=model_config, module=model,
                             name=f"b{model_config.base_channels}")
    params.validate_finite()
    return params, record


def _denoised(denoiser: nn.Module, noisy: torch.Tensor) -> torch.Tensor:
    with torch.no_grad():
        return denoiser(noisy)


def train_denoiser(
    config: TrainConfig,
    model_config: ModelConfig,
    train_set: SampleSet,
    val_set: SampleSet,
    *,
    verbose: bool = False,
) -> tuple[ModelParameters, TrainRecord]:
    """Supervised denoiser: mean squared error against the clean images."""
    _check_sets(train_set, val_set)
    torch.manual_seed(config.seed + 1)
    model = DenoiseNet(model_config)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    sched = torch.optim.lr_scheduler.ReduceLROnPlateau(
        opt, factor=config.lr_factor, patience=config.lr_patience)
    clean_t = torch.from_numpy(train_set.clean)[:, None]
    val_clean = torch.from_numpy(val_set.clean)[:, None]
    val_noisy = _noisy_batch(val_set, range(len(val_set)), config.lambda_,
                             config.seed, 0, VAL_STREAM)

    record = TrainRecord()
    stopper = _EarlyStopper(config.patience)
    t0 = time.time()
    for epoch in range(1, config.max_epochs + 1):
        model.train()
        order = _epoch_order(config.seed + 1, epoch, len(train_set))
        total = 0.0
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo : lo + config.batch_size]
            noisy = _noisy_batch(train_set, idx, config.lambda_, config.seed,
                                 epoch, TRAIN_STREAM)
            opt.zero_grad()
            loss = F.mse_loss(model(noisy), clean_t[idx])
            _abort_if_bad(loss, epoch, "denoiser training")
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        train_loss = total / len(train_set)

        model.eval()
        with torch.no_grad():
            vtotal = 0.0
            for lo in range(0, len(val_set), config.batch_size):
                sl = slice(lo, lo + config.batch_size)
                vloss = F.mse_loss(model(val_noisy[sl]), val_clean[sl])
                vtotal += float(vloss) * len(val_noisy[sl])
            vtotal = vtotal / len(val_set)
        record.train_loss.append(train_loss)
        record.val_loss.append(vtotal)
        sched.step(vtotal)
        if verbose:
            print(f"denoiser epoch {epoch:3d}  train {train_loss:.6f}  val {vtotal:.6f}")
        if stopper.step(epoch, vtotal, model):
            break

    _finish(model, stopper)
    record.best_epoch = stopper.best_epoch
    record.wall_clock_s = time.time() - t0
    params = ModelParameters(config=model_config, module=model,
                             name=f"denoiser_b{model_config.base_channels}")
    params.validate_finite()
    return params, record


def train_sequential_baseline(
    config: TrainConfig,
    model_config: ModelConfig,
    train_set: SampleSet,
    val_set: SampleSet,
    *,
    denoiser_epochs: int | None = None,
    verbose: bool = False,
):
    """Denoise-then-segment: train the denoiser alone, freeze it, then train
    the segmenter on its outputs."""
    den_cfg = config if denoiser_epochs is None else \
        TrainConfig(**{**config.to_json_dict(), "max_epochs": denoiser_epochs})
    denoiser, den_record = train_denoiser(den_cfg, model_config, train_set, val_set,
                                          verbose=verbose)
    denoiser.module.eval()

    torch.manual_seed(config.seed + 2)
    model = DepthNet(model_config)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    sched = torch.optim.lr_scheduler.ReduceLROnPlateau(
        opt, factor=config.lr_factor, patience=config.lr_patience)
    labels_t = torch.from_numpy(train_set.labels)
    weights_t = torch.from_numpy(train_set.weights)
    val_labels = torch.from_numpy(val_set.labels)
    val_weights = torch.from_numpy(val_set.weights)
    val_noisy = _noisy_batch(val_set, range(len(val_set)), config.lambda_,
                             config.seed, 0, VAL_STREAM)
    val_den = _denoised(denoiser.module, val_noisy)

    record = TrainRecord()
    stopper = _EarlyStopper(config.patience)
    t0 = time.time()
    for epoch in range(1, config.max_epochs + 1):
        model.train()
        order = _epoch_order(config.seed + 2, epoch, len(train_set))
        total = 0.0
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo : lo + config.batch_size]
            noisy = _noisy_batch(train_set, idx, config.lambda_, config.seed,
                                 epoch, TRAIN_STREAM)
            den = _denoised(denoiser.module, noisy)
            opt.zero_grad()
            loss = _weighted_ce_scores(model(den), labels_t[idx], weights_t[idx])
            _abort_if_bad(loss, epoch, "sequential segmenter")
            loss.backward()
            opt.step()
            total += loss.item()
        model.eval()
        with torch.no_grad():
            vtotal = 0.0
            for lo in range(0, len(val_set), config.batch_size):
                sl = slice(lo, lo + config.batch_size)
                vtotal += float(_weighted_ce_scores(model(val_den[sl]), val_labels[sl],
                                                    val_weights[sl]))
        val_loss = vtotal / len(val_set)
        record.train_loss.append(total / len(train_set))
        record.val_loss.append(val_loss)
        sched.step(val_loss)
        if verbose:
            print(f"seq-segmenter epoch {epoch:3d}  val {val_loss:10.2f}")
        if stopper.step(epoch, val_loss, model):
            break

    _finish(model, stopper)
    record.best_epoch = stopper.best_epoch
    record.wall_clock_s = time.time() - t0
    seg = ModelParameters(config=model_config, module=model,
                          name=f"seq_seg_b{model_config.base_channels}")
    seg.validate_finite()
    return TwoStagePipeline(denoiser=denoiser, segmenter=seg, name="denoise_then_segment"), \
        {"denoiser": den_record, "segmenter": record}


def train_joint_baseline(
    config: TrainConfig,
    model_config: ModelConfig,
    train_set: SampleSet,
    val_set: SampleSet,
    *,
    verbose: bool = False,
):
    """Denoise-plus-segment trained simultaneously.

    Per batch the denoiser output is scored against the clean image (MSE,
    updating the denoiser) and fed to the segmenter (weighted CE, updating
    the segmenter); the combined objective adds them with unit weights.
    """
    _check_sets(train_set, val_set)
    torch.manual_seed(config.seed + 3)
    denoiser = DenoiseNet(model_config)
    segmenter = DepthNet(model_config)
    opt = torch.optim.Adam(list(denoiser.parameters()) + list(segmenter.parameters()),
                           lr=config.lr)
    sched = torch.optim.lr_scheduler.ReduceLROnPlateau(
        opt, factor=config.lr_factor, patience=config.lr_patience)
    clean_t = torch.from_numpy(train_set.clean)[:, None]
    labels_t = torch.from_numpy(train_set.labels)
    weights_t = torch.from_numpy(train_set.weights)
    val_clean = torch.from_numpy(val_set.clean)[:, None]
    val_labels = torch.from_numpy(val_set.labels)
    val_weights = torch.from_numpy(val_set.weights)
    val_noisy = _noisy_batch(val_set, range(len(val_set)), config.lambda_,
                             config.seed, 0, VAL_STREAM)

    record = TrainRecord()
    stopper = _EarlyStopper(config.patience)
    t0 = time.time()
    for epoch in range(1, config.max_epochs + 1):
        denoiser.train()
        segmenter.train()
        order = _epoch_order(config.seed + 3, epoch, len(train_set))
        total = 0.0
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo : lo + config.batch_size]
            noisy = _noisy_batch(train_set, idx, config.lambda_, config.seed,
                                 epoch, TRAIN_STREAM)
            opt.zero_grad()
            den = denoiser(noisy)
            mse = F.mse_loss(den, clean_t[idx])
            # The segmentation loss trains the segmenter on the denoiser's
            # current output; it does not backpropagate into the denoiser.
            ce = _weighted_ce_scores(segmenter(den.detach()), labels_t[idx], weights_t[idx])
            loss = mse + ce
            _abort_if_bad(loss, epoch, "joint")
            loss.backward()
            opt.step()
            total += loss.item()
        denoiser.eval()
        segmenter.eval()
        with torch.no_grad():
            vtotal = 0.0
            for lo in range(0, len(val_set), config.batch_size):
                sl = slice(lo, lo + config.batch_size)
                den = denoiser(val_noisy[sl])
                vtotal += float(F.mse_loss(den, val_clean[sl]) +
                                _weighted_ce_scores(segmenter(den), val_labels[sl],
                                                    val_weights[sl]))
        val_loss = vtotal / len(val_set)
        record.train_loss.append(total / len(train_set))
        record.val_loss.append(val_loss)
        sched.step(val_loss)
        if verbose:
            print(f"joint epoch {epoch:3d}  val {val_loss:10.2f}")
        if stopper.step(epoch, val_loss, _JointPair(denoiser, segmenter)):
            break

    if stopper.best_state is not None:
        pair = _JointPair(denoiser, segmenter)
        pair.load_state_dict(stopper.best_state)
    denoiser.eval()
    segmenter.eval()
    record.best_epoch = stopper.best_epoch
    record.wall_clock_s = time.time() - t0
    den_params = ModelParameters(config=model_config, module=denoiser,
                                 name=f"joint_denoiser_b{model_config.base_channels}")
    seg_params = ModelParameters(config=model_config, module=segmenter,
                                 name=f"joint_seg_b{model_config.base_channels}")
    return TwoStagePipeline(denoiser=den_params, segmenter=seg_params,
                            name="denoise_plus_segment"), {"joint": record}


class _JointPair(nn.Module):
    """State-dict adapter so early stopping can snapshot both networks."""

    def __init__(self, denoiser: nn.Module, segmenter: nn.Module):
        super().__init__()
        self.denoiser = denoiser
        self.segmenter = segmenter


@dataclass
class TwoStagePipeline:
    """Denoiser followed by a segmenter, evaluated like a single model."""

    denoiser: ModelParameters
    segmenter: ModelParameters
    name: str = "denoise_then_segment"

    def probs_for_stack(self, pixel_stack: np.ndarray, batch_size: int = 8) -> np.ndarray:
        self.denoiser.module.eval()
        self.segmenter.module.eval()
        outs = []
        with torch.no_grad():
            for i in range(0, len(pixel_stack), batch_size):
                t = torch.from_numpy(np.ascontiguousarray(
                    pixel_stack[i : i + batch_size], dtype=np.float32))[:, None]
                den = self.denoiser.module(t)
                probs = torch.softmax(self.segmenter.module(den), dim=1)
                outs.append(probs.permute(0, 2, 3, 1).numpy())
        return np.concatenate(outs, axis=0)
