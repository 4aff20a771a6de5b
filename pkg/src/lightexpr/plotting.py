"""Report figures. Everything renders off-screen to image files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def _display(image):
    return np.clip((np.asarray(image) + 1) / 2, 0, 1)


def plot_training_curves(entries, path, terms=("adv", "cls", "rec", "id", "qual")):
    """Generator terms and critic gap per iteration from a training log."""
    with plt.rc_context(STYLE):
        fig, (ax_g, ax_d) = plt.subplots(1, 2, figsize=(9, 3.2))
        it = [e["iteration"] for e in entries]
        for t in terms:
            ax_g.plot(it, [e["g"][t] for e in entries], lw=1, label=t)
        ax_g.set_xlabel("generator step")
        ax_g.set_ylabel("loss term")
        ax_g.legend(ncol=2, frameon=False)
        d = [(e["iteration"], e["d"]) for e in entries if e.get("d")]
        if d:
            ax_d.plot([i for i, _ in d], [x["critic_gap"] for _, x in d], lw=1, label="critic gap")
            ax_d.plot([i for i, _ in d], [x["cls_real"] for _, x in d], lw=1, label="real cls")
            ax_d.legend(frameon=False)
        ax_d.set_xlabel("generator step")
        return _save(fig, path)


def plot_epoch_losses(history, path):
    """Train and validation loss per epoch (quality model log)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        ep = [h["epoch"] for h in history]
        ax.plot(ep, [h["train_loss"] for h in history], marker="o", ms=3, label="train")
        val = [h["val_loss"] for h in history]
        if any(v is not None for v in val):
            ax.plot(ep, [np.nan if v is None else v for v in val], marker="s", ms=3, label="validation")
        ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_synthesis(inp, result: dict, path, title=None):
    """Input, masks (when present) and output side by side."""
    panels = [("input", inp)]
    if "mask_e" in result:
        panels += [("expression mask", result["mask_e"]), ("lighting mask", result["mask_l"])]
    panels.append(("output", result["output"]))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(panels), figsize=(2.2 * len(panels), 2.5))
        for ax, (name, img) in zip(np.atleast_1d(axes), panels):
            ax.imshow(_display(img))
            ax.set_title(name)
            ax.axis("off")
        if title:
            fig.suptitle(title)
        return _save(fig, path)


def plot_quality_histogram(scores, path, label="synthesized"):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        ax.hist(np.asarray(scores, dtype=float), bins=20, range=(0, 10), color="0.4", edgecolor="white")
        ax.set_xlabel("predicted naturalness")
        ax.set_ylabel("images")
        ax.set_title(label)
        return _save(fig, path)


def plot_metric_bars(rows, metric, path):
    """One bar per variant for a single report column."""
    names = [r["model"] for r in rows]
    vals = [np.nan if r.get(metric) is None else float(r[metric]) for r in rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.8 * len(rows)), 3.2))
        ax.bar(range(len(rows)), vals, color="0.45")
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels(names, rotation=30, ha="right")
        ax.set_ylabel(metric)
        return _save(fig, path)
