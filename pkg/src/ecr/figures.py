"""Figure rendering for reports: loss curves, score bars, variant comparison."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import METRIC_NAMES, MetricReport

_METRIC_TITLES = {"muc": "MUC", "b_cubed": "B3", "ceaf_e": "CEAFe", "blanc": "BLANC"}


def save_loss_curves(loss_log: Sequence[Mapping], path: str | Path) -> Path:
    """Per-epoch task and joint losses as one line chart."""
    path = Path(path)
    epochs = [rec["epoch"] for rec in loss_log]
    fig, ax = plt.subplots(figsize=(6, 4))
    for key, label in (
        ("type_loss", "type prediction"),
        ("compat_loss", "compatibility"),
        ("coref_loss", "coreference"),
        ("joint_loss", "joint"),
    ):
        if loss_log and key in loss_log[0]:
            ax.plot(epochs, [rec[key] for rec in loss_log], marker="o", label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title("training loss")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_score_bars(result: MetricReport, path: str | Path) -> Path:
    """Bar chart of the four partition F1 scores plus their average."""
    path = Path(path)
    names = [_METRIC_TITLES[n] for n in METRIC_NAMES] + ["AVG"]
    row = result.f1_row()
    values = [row[n] for n in METRIC_NAMES] + [row["avg"]]
    fig, ax = plt.subplots(figsize=(6, 4))
    bars = ax.bar(names, values, color="#4878a8")
    ax.bar_label(bars, fmt="%.3f")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("F1")
    ax.set_title("coreference scores")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_variant_bars(rows: Sequence[Mapping], path: str | Path) -> Path:
    """Grouped bars comparing template variants on AVG and pair F1."""
    path = Path(path)
    variants = [str(r["variant"]) for r in rows]
    avg = [float(r["avg_f1"]) for r in rows]
    pair = [float(r["pair_f1"]) for r in rows]
    x = range(len(variants))
    width = 0.38
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar([i - width / 2 for i in x], avg, width, label="AVG F1", color="#4878a8")
    ax.bar([i + width / 2 for i in x], pair, width, label="pair F1", color="#a85b48")
    ax.set_xticks(list(x), variants, rotation=15)
    ax.set_ylim(0, 1.05)
    ax.set_title("template variants")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
