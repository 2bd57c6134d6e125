"""Render figures from metrics logs and sweep tables.

The training/sweep commands emit JSON-lines and CSV; this module turns
those into PNG files next to the delimited output so a run's results can
be eyeballed without further tooling.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def load_metrics(path) -> list[dict]:
    reports = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                reports.append(json.loads(line))
    return reports


def plot_training_curves(metrics_path, out_dir) -> list[Path]:
    """Metric-vs-epoch and final top-k curves from a JSON-lines log."""
    reports = load_metrics(metrics_path)
    if not reports:
        return []
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(metrics_path).stem
    made = []

    epochs = [r["epoch"] for r in reports]
    hr10 = [r["hr"][-1] for r in reports]
    ndcg10 = [r["ndcg"][-1] for r in reports]
    k_max = len(reports[-1]["hr"])

    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.plot(epochs, hr10, marker="o", label=f"HR@{k_max}")
    ax.plot(epochs, ndcg10, marker="s", label=f"NDCG@{k_max}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("metric")
    ax.legend()
    fig.tight_layout()
    path = out_dir / f"{stem}_epochs.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    made.append(path)

    ks = list(range(1, k_max + 1))
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.plot(ks, reports[-1]["hr"], marker="o", label="HR@k")
    ax.plot(ks, reports[-1]["ndcg"], marker="s", label="NDCG@k")
    ax.set_xlabel("k")
    ax.set_ylabel("metric")
    ax.set_xticks(ks)
    ax.legend()
    fig.tight_layout()
    path = out_dir / f"{stem}_topk.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    made.append(path)
    return made


def plot_sweep(csv_path, out_path=None) -> Path | None:
    """HR@10 / NDCG@10 against the swept axis value."""
    labels, hr, ndcg = [], [], []
    with open(csv_path, "r", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            try:
                h, n = float(row["hr@10"]), float(row["ndcg@10"])
            except ValueError:
                continue
            labels.append(row["axis_value"])
            hr.append(h)
            ndcg.append(n)
    if not labels:
        return None
    out_path = Path(out_path) if out_path else Path(csv_path).with_suffix(".png")
    x = range(len(labels))
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.plot(x, hr, marker="o", label="HR@10")
    ax.plot(x, ndcg, marker="s", label="NDCG@10")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=20)
    ax.set_xlabel("value")
    ax.set_ylabel("metric")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
