"""Plot helpers for reports and demos.  Plots are derived artifacts only;
nothing downstream reads them back."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_image_grid(panels, path, *, cmap="viridis", suptitle=None):
    """panels: list of (title, 2D array).  One row of image panels."""
    fig, axes = plt.subplots(1, len(panels), figsize=(3.2 * len(panels), 3.2))
    if len(panels) == 1:
        axes = [axes]
    for ax, (title, img) in zip(axes, panels):
        im = ax.imshow(img, cmap=cmap)
        ax.set_title(title, fontsize=9)
        ax.axis("off")
        fig.colorbar(im, ax=ax, fraction=0.046)
    if suptitle:
        fig.suptitle(suptitle)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)


def plot_confusion(confusion: np.ndarray, path, *, normalize=True):
    conf = confusion.astype(np.float64)
    if normalize:
        row = conf.sum(axis=1, keepdims=True)
        conf = np.divide(conf, row, out=np.zeros_like(conf), where=row > 0)
    fig, ax = plt.subplots(figsize=(5.5, 5))
    im = ax.imshow(conf, cmap="magma", vmin=0)
    ax.set_xlabel("predicted depth")
    ax.set_ylabel("true depth")
    ax.set_title("depth confusion" + (" (row-normalized)" if normalize else ""))
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)


def plot_reliability(curve, path):
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot([0, 1], [0, 1], "k--", lw=1, label="perfect calibration")
    ok = curve.counts > 0
    ax.plot(curve.mean_confidence[ok], curve.accuracy[ok], "o-", label="model")
    ax.set_xlabel("confidence")
    ax.set_ylabel("accuracy")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_title(f"reliability (ECE = {curve.ece:.3f})")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)


def plot_sweep(table, path, metric="center_acc"):
    fig, ax = plt.subplots(figsize=(6, 4))
    by_model: dict[str, list] = {}
    for row in table.rows:
        by_model.setdefault(row["model"], []).append((row["lambda"], row[metric]))
    for name, pts in by_model.items():
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-", label=name)
    ax.set_xscale("log")
    ax.set_xlabel("noise parameter")
    ax.set_ylabel(metric)
    ax.set_title("generalization across noise levels")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)


def plot_track(track, pixel_index: int, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    probs = track.probs[:, pixel_index, :]
    frames = np.arange(probs.shape[0])
    for d in range(probs.shape[1]):
        if probs[:, d].max() > 0.02:
            ax.plot(frames, probs[:, d], label=f"depth {d}")
    r, c = track.pixels[pixel_index]
    ax.set_xlabel("frame")
    ax.set_ylabel("probability")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(f"depth probabilities at pixel ({r}, {c})")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)


def plot_saliency(smap, path):
    m = smap.magnitude
    peak = m.max()
    fig, ax = plt.subplots(figsize=(5, 5))
    im = ax.imshow(m / peak if peak > 0 else m, cmap="inferno")
    ax.set_title(f"|input gradient|, pixel {smap.pixel}, depth {smap.depth}")
    ax.axis("off")
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)
