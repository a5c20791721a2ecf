"""Rendering run metrics to PNG figures next to the CSV output.

The CSVs stay the machine-readable contract; these charts are the quick-look
companions: learning curves averaged over seeds, and a final-accuracy summary
bar chart with across-seed standard deviations.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _curves_by_label(records):
    """label -> (epochs, mean train_loss, mean val_loss, mean val_accuracy)."""
    by_label = {}
    for rec in records:
        by_label.setdefault(rec.run_label, []).append(rec)
    out = {}
    for label, rows in by_label.items():
        epochs = sorted({r.epoch for r in rows})
        means = []
        for metric in ("train_loss", "val_loss", "val_accuracy"):
            means.append(
                np.array(
                    [np.mean([getattr(r, metric) for r in rows if r.epoch == e]) for e in epochs]
                )
            )
        out[label] = (np.array(epochs), *means)
    return out


def learning_curves(records, path) -> None:
    """Two panels: training loss and validation accuracy per epoch, one line per run."""
    curves = _curves_by_label(records)
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(10, 4))
    for label, (epochs, train_loss, _, val_acc) in curves.items():
        ax_loss.plot(epochs, train_loss, label=label)
        ax_acc.plot(epochs, val_acc, label=label)
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("training loss")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("validation accuracy")
    ax_acc.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def accuracy_summary(aggregates, path) -> None:
    """Bar chart of final validation accuracy (mean with std whiskers) per run."""
    rows = [a for a in aggregates if a.metric == "val_accuracy"]
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(rows)), 4))
    positions = np.arange(len(rows))
    ax.bar(positions, [r.mean for r in rows], yerr=[r.std for r in rows], capsize=4)
    ax.set_xticks(positions)
    ax.set_xticklabels([r.run_label for r in rows], rotation=30, ha="right")
    ax.set_ylabel("validation accuracy")
    ax.set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_figures(records, aggregates, out_dir, stem: str) -> list[Path]:
    """Write both figures for one report; returns the paths written."""
    out_dir = Path(out_dir)
    curves_path = out_dir / f"{stem}_curves.png"
    summary_path = out_dir / f"{stem}_accuracy.png"
    learning_curves(records, curves_path)
    accuracy_summary(aggregates, summary_path)
    return [curves_path, summary_path]
