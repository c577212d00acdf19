"""Metrics, confusion matrices, calibration curves and noise-level sweeps.

Four headline rates quantify recovery of the atomic structure:

* pixelwise accuracy  - fraction of all pixels with the correct depth class
* center accuracy     - same, restricted to disks around column centers
* real atom detection - fraction of true column pixels predicted non-zero
* hallucinated atoms  - fraction of predicted column pixels that are
                        actually background (0 when nothing is predicted)

Calibration compares confidence scores against empirical accuracy in
equal-width confidence bins and reports the expected calibration error.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import SampleSet
from .labels import DepthMap, SmoothedLabelMap, center_disk_mask
from .lattice import NUM_DEPTH_CLASSES
from .network import DepthEstimate, ModelParameters, count_parameters, estimate_from_probs, forward_batch
from .noise import _poisson_scaled, derive_noise_seed

CENTER_RADIUS_HEAVY_PX = 4.0  # at label resolution
CENTER_RADIUS_LIGHT_PX = 3.0


def _labels_of(truth) -> np.ndarray:
    if isinstance(truth, (SmoothedLabelMap, DepthMap)):
        return truth.labels
    return np.asarray(truth)


@dataclass
class EvalReport:
    pixelwise_acc: float
    center_acc: float
    real_atom_detection_rate: float
    hallucinated_atom_rate: float
    confusion: np.ndarray
    n_pixels: int

    def to_json_dict(self) -> dict:
        return {
            "pixelwise_acc": self.pixelwise_acc,
            "center_acc": self.center_acc,
            "real_atom_detection_rate": self.real_atom_detection_rate,
            "hallucinated_atom_rate": self.hallucinated_atom_rate,
            "confusion": self.confusion.tolist(),
            "n_pixels": self.n_pixels,
        }


class EvalAccumulator:
    """Pools pixel counts over many (prediction, truth) pairs."""

    def __init__(self, num_classes: int = NUM_DEPTH_CLASSES):
        self.num_classes = num_classes
        self.confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
        self.center_total = 0
        self.center_correct = 0
        self.atom_total = 0
        self.atom_detected = 0
        self.pred_atom_total = 0
        self.pred_atom_false = 0

    def update(self, pred: DepthEstimate, truth, centers=None) -> None:
        t = _labels_of(truth)
        d = pred.d_hat
        if t.size == 0:
            raise ValueError("empty truth map")
        if d.shape != t.shape:
            raise ValueError(f"prediction shape {d.shape} != truth shape {t.shape}")
        self.confusion += confusion_matrix(pred, t, num_classes=self.num_classes)
        if centers is not None:
            mask = center_disk_mask(t.shape, centers,
                                    heavy_radius=CENTER_RADIUS_HEAVY_PX,
                                    light_radius=CENTER_RADIUS_LIGHT_PX)
            self.center_total += int(mask.sum())
            self.center_correct += int((d[mask] == t[mask]).sum())
        atoms = t > 0
        pred_atoms = d > 0
        self.atom_total += int(atoms.sum())
        self.atom_detected += int((atoms & pred_atoms).sum())
        self.pred_atom_total += int(pred_atoms.sum())
        self.pred_atom_false += int((pred_atoms & ~atoms).sum())

    def report(self) -> EvalReport:
        n = int(self.confusion.sum())
        if n == 0:
            raise ValueError("no pixels accumulated")
        correct = int(np.trace(self.confusion))
        return EvalReport(
            pixelwise_acc=correct / n,
            center_acc=(self.center_correct / self.center_total
                        if self.center_total else float("nan")),
            real_atom_detection_rate=(self.atom_detected / self.atom_total
                                      if self.atom_total else float("nan")),
            hallucinated_atom_rate=(self.pred_atom_false / self.pred_atom_total
                                    if self.pred_atom_total else 0.0),
            confusion=self.confusion.copy(),
            n_pixels=n,
        )


def metrics(pred: DepthEstimate, truth, centers=None) -> EvalReport:
    """Headline rates for one prediction/truth pair.

    ``centers`` is a list of (row, col, species) at label resolution; when
    omitted, center accuracy is NaN.
    """
    acc = EvalAccumulator()
    acc.update(pred, truth, centers)
    return acc.report()


def confusion_matrix(pred, truth, num_classes: int = NUM_DEPTH_CLASSES) -> np.ndarray:
    """Entry (a, b) counts pixels with truth a and prediction b."""
    d = pred.d_hat if isinstance(pred, DepthEstimate) else np.asarray(pred)
    t = _labels_of(truth)
    if d.shape != t.shape:
        raise ValueError(f"prediction shape {d.shape} != truth shape {t.shape}")
    idx = t.reshape(-1).astype(np.int64) * num_classes + d.reshape(-1).astype(np.int64)
    return np.bincount(idx, minlength=num_classes * num_classes).reshape(
        num_classes, num_classes)


@dataclass
class CalibrationCurve:
    bin_edges: np.ndarray  # [n_bins + 1]
    mean_confidence: np.ndarray  # [n_bins], NaN where empty
    accuracy: np.ndarray  # [n_bins], NaN where empty
    counts: np.ndarray  # [n_bins]
    ece: float
    n_total: int

    def to_json_dict(self) -> dict:
        return {
            "bin_edges": self.bin_edges.tolist(),
            "mean_confidence": [None if np.isnan(v) else v for v in self.mean_confidence],
            "accuracy": [None if np.isnan(v) else v for v in self.accuracy],
            "counts": self.counts.tolist(),
            "ece": self.ece,
            "n_total": self.n_total,
        }


def calibration(estimates, truths, n_bins: int = 10) -> CalibrationCurve:
    """Reliability curve over equal-width confidence bins on [0, 1].

    Empty bins keep count 0 with undefined (NaN) accuracy and do not enter
    the expected calibration error.
    """
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    if isinstance(estimates, DepthEstimate):
        estimates = [estimates]
        truths = [truths]
    conf_parts, ok_parts = [], []
    for est, truth in zip(estimates, truths):
        t = _labels_of(truth)
        conf_parts.append(est.confidence.reshape(-1))
        ok_parts.append((est.d_hat == t).reshape(-1))
    conf = np.concatenate(conf_parts)
    ok = np.concatenate(ok_parts).astype(np.float64)
    bins = np.clip((conf * n_bins).astype(np.int64), 0, n_bins - 1)
    counts = np.bincount(bins, minlength=n_bins)
    conf_sum = np.bincount(bins, weights=conf, minlength=n_bins)
    ok_sum = np.bincount(bins, weights=ok, minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_conf = np.where(counts > 0, conf_sum / np.maximum(counts, 1), np.nan)
        acc = np.where(counts > 0, ok_sum / np.maximum(counts, 1), np.nan)
    occupied = counts > 0
    ece = float(np.sum((counts[occupied] / conf.size) *
                       np.abs(acc[occupied] - mean_conf[occupied])))
    return CalibrationCurve(
        bin_edges=np.linspace(0.0, 1.0, n_bins + 1),
        mean_confidence=mean_conf,
        accuracy=acc,
        counts=counts,
        ece=ece,
        n_total=int(conf.size),
    )


def _probs_for(model_like, pixel_stack: np.ndarray, batch_size: int = 8) -> np.ndarray:
    if isinstance(model_like, ModelParameters):
        return forward_batch(model_like, pixel_stack, batch_size=batch_size)
    return model_like.probs_for_stack(pixel_stack, batch_size=batch_size)


def _model_name(model_like) -> str:
    return getattr(model_like, "name", "") or "model"


def evaluate_model(
    model_like,
    dataset: SampleSet,
    lambda_: float,
    seed: int = 0,
    *,
    use_raw_labels: bool = False,
    batch_size: int = 8,
    return_estimates: bool = False,
):
    """Corrupt the dataset's clean images at ``lambda_`` (seeded), run the
    model, and pool the metrics over all samples."""
    from .training import EVAL_STREAM  # local import to avoid a cycle

    noisy = np.stack([
        _poisson_scaled(dataset.clean[i], lambda_,
                        derive_noise_seed(seed, dataset.seeds[i], 0, EVAL_STREAM))
        for i in range(len(dataset))
    ]).astype(np.float32)
    probs = _probs_for(model_like, noisy, batch_size=batch_size)
    acc = EvalAccumulator()
    estimates = []
    truths = []
    for i in range(len(dataset)):
        est = estimate_from_probs(probs[i])
        truth = dataset.raw_depth(i) if use_raw_labels else dataset.labels[i]
        centers = dataset.centers(i) if dataset.models is not None else None
        acc.update(est, truth, centers)
        estimates.append(est)
        truths.append(truth)
    report = acc.report()
    if return_estimates:
        return report, estimates, truths
    return report


@dataclass
class SweepTable:
    """(model x lambda) metric grid from a noise-generalization sweep."""

    rows: list[dict]

    COLUMNS = ("model", "n_parameters", "lambda", "pixelwise_acc", "center_acc",
               "real_atom_detection_rate", "hallucinated_atom_rate")

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        lines = [",".join(self.COLUMNS)]
        for row in self.rows:
            lines.append(",".join(str(row[c]) for c in self.COLUMNS))
        path.write_text("\n".join(lines) + "\n")
        return path


@dataclass
class TrackResult:
    """Per-frame probability traces at a set of tracked output pixels."""

    pixels: list[tuple[int, int]]
    probs: np.ndarray  # [n_frames, n_pixels, num_classes]
    d_hat: np.ndarray  # [n_frames, n_pixels]

    @property
    def n_frames(self) -> int:
        return self.probs.shape[0]

    def to_csv(self, pixel_index: int, path: str | Path) -> Path:
        path = Path(path)
        n_classes = self.probs.shape[-1]
        header = "frame,d_hat," + ",".join(f"p{d}" for d in range(n_classes))
        lines = [header]
        for f in range(self.n_frames):
            probs = ",".join(f"{v:.6f}" for v in self.probs[f, pixel_index])
            lines.append(f"{f},{self.d_hat[f, pixel_index]},{probs}")
        path.write_text("\n".join(lines) + "\n")
        return path


def track_sequence(model_like, frames, pixels) -> TrackResult:
    """Run inference on an image sequence and trace the per-depth
    probabilities at fixed output-resolution pixels."""
    arrays = [f.pixels if hasattr(f, "pixels") else np.asarray(f) for f in frames]
    if not arrays:
        raise ValueError("empty frame sequence")
    shape = arrays[0].shape
    for i, a in enumerate(arrays):
        if a.shape != shape:
            raise ValueError(f"frame {i} shape {a.shape} != frame 0 shape {shape}")
    stack = np.stack(arrays).astype(np.float32)
    probs = _probs_for(model_like, stack)
    oh, ow = probs.shape[1:3]
    for r, c in pixels:
        if not (0 <= r < oh and 0 <= c < ow):
            raise ValueError(f"tracked pixel ({r}, {c}) outside output shape {(oh, ow)}")
    sel = np.stack([probs[:, r, c, :] for r, c in pixels], axis=1)
    return TrackResult(pixels=[(int(r), int(c)) for r, c in pixels],
                       probs=sel, d_hat=np.argmax(sel, axis=-1))


def noise_sweep(models, lambdas, dataset: SampleSet, seed: int = 0,
                *, use_raw_labels: bool = False) -> SweepTable:
    """Evaluate each model on test sets corrupted at each noise level."""
    if not isinstance(models, (list, tuple)):
        models = [models]
    lambdas = list(lambdas)
    if any(l <= 0 for l in lambdas):
        raise ValueError("all lambda values must be > 0")
    rows = []
    for m in models:
        n_par = count_parameters(m) if isinstance(m, ModelParameters) else \
            count_parameters(m.denoiser) + count_parameters(m.segmenter)
        for lam in lambdas:
            rep = evaluate_model(m, dataset, lam, seed=seed, use_raw_labels=use_raw_labels)
            rows.append({
                "model": _model_name(m),
                "n_parameters": n_par,
                "lambda": lam,
                "pixelwise_acc": rep.pixelwise_acc,
                "center_acc": rep.center_acc,
                "real_atom_detection_rate": rep.real_atom_detection_rate,
                "hallucinated_atom_rate": rep.hallucinated_atom_rate,
            })
    return SweepTable(rows=rows)
