"""Render sweeps, heatmaps, training curves, and parameter histograms to
CSV plus PNG files. Every writer returns the list of paths it produced."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import InputError


def _ensure_dir(out_dir) -> Path:
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_sweep_report(sweeps, out_dir, stem: str = "sweep") -> list[Path]:
    """One CSV row per (operator, value) plus a dR-vs-value line chart."""
    if not sweeps:
        raise InputError("no sweep results to report")
    out = _ensure_dir(out_dir)
    csv_path = out / f"{stem}.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["operator", "value", "delta_r", "r_base"])
        for sweep in sweeps:
            for value, dr in zip(sweep.values, sweep.delta_r):
                writer.writerow([sweep.operator, value, dr, sweep.r_base])

    fig, ax = plt.subplots(figsize=(6, 4))
    for sweep in sweeps:
        ax.plot(sweep.values, sweep.delta_r, marker="o", label=sweep.operator)
    ax.axhline(0.0, color="gray", lw=0.8)
    ax.axvline(1.0, color="gray", lw=0.8, ls="--")
    ax.set_xlabel("parameter value")
    ax.set_ylabel("score change")
    ax.legend(fontsize=8)
    fig.tight_layout()
    png_path = out / f"{stem}.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return [csv_path, png_path]


def write_heatmap_report(heatmap, out_dir, stem: str = "heatmap") -> list[Path]:
    """Grid CSV (row/col offsets in the margins) and an annotated image."""
    out = _ensure_dir(out_dir)
    csv_path = out / f"{stem}.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [f"{heatmap.param_rows}\\{heatmap.param_cols}", *heatmap.offsets_cols]
        )
        for off, row in zip(heatmap.offsets_rows, heatmap.delta_r):
            writer.writerow([off, *("" if not np.isfinite(v) else v for v in row)])

    fig, ax = plt.subplots(figsize=(5, 4.2))
    masked = np.ma.masked_invalid(heatmap.delta_r)
    im = ax.imshow(masked, origin="upper", cmap="viridis")
    ci, cj = heatmap.center
    ax.scatter([cj], [ci], marker="x", color="red", s=80)
    ax.set_xticks(range(len(heatmap.offsets_cols)))
    ax.set_xticklabels([f"{v:+.2f}" for v in heatmap.offsets_cols], fontsize=7)
    ax.set_yticks(range(len(heatmap.offsets_rows)))
    ax.set_yticklabels([f"{v:+.2f}" for v in heatmap.offsets_rows], fontsize=7)
    ax.set_xlabel(f"{heatmap.param_cols} offset")
    ax.set_ylabel(f"{heatmap.param_rows} offset")
    fig.colorbar(im, ax=ax, label="score change")
    fig.tight_layout()
    png_path = out / f"{stem}.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return [csv_path, png_path]


def write_training_report(report, out_dir, stem: str = "training") -> list[Path]:
    """Full report JSON, per-epoch CSV, and metric curves.

    Works for both critic and estimator reports: every numeric key found in
    the per-epoch dicts becomes a CSV column and a curve.
    """
    out = _ensure_dir(out_dir)
    json_path = out / f"{stem}.json"
    with open(json_path, "w") as fh:
        json.dump(report.to_json(), fh, indent=2)
    paths = [json_path]

    epochs = report.epochs
    if epochs:
        keys = [k for k in epochs[0] if k != "epoch"]
        csv_path = out / f"{stem}_epochs.csv"
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", *keys])
            for row in epochs:
                writer.writerow([row.get("epoch")] + [row.get(k, "") for k in keys])
        paths.append(csv_path)

        fig, ax = plt.subplots(figsize=(6, 4))
        xs = [row.get("epoch") for row in epochs]
        for key in keys:
            ax.plot(xs, [row.get(key, np.nan) for row in epochs], label=key)
        ax.set_xlabel("epoch")
        ax.legend(fontsize=8)
        fig.tight_layout()
        png_path = out / f"{stem}_curves.png"
        fig.savefig(png_path, dpi=120)
        plt.close(fig)
        paths.append(png_path)
    return paths


def write_param_distribution(dist, out_dir, stem: str = "params") -> list[Path]:
    """Histogram CSV (operator, bin_lo, bin_hi, count) and a 2x2 panel."""
    out = _ensure_dir(out_dir)
    csv_path = out / f"{stem}.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["operator", "bin_lo", "bin_hi", "count", "mean", "std"])
        for op, hist in dist.histograms.items():
            edges = hist["edges"]
            for lo, hi, count in zip(edges[:-1], edges[1:], hist["counts"]):
                writer.writerow([op, lo, hi, count, hist["mean"], hist["std"]])

    ops = list(dist.histograms)
    rows = (len(ops) + 1) // 2
    fig, axes = plt.subplots(rows, 2, figsize=(8, 3 * rows), squeeze=False)
    for k, op in enumerate(ops):
        ax = axes[k // 2][k % 2]
        hist = dist.histograms[op]
        edges = np.asarray(hist["edges"])
        ax.bar(
            edges[:-1],
            hist["counts"],
            width=np.diff(edges),
            align="edge",
            edgecolor="black",
            linewidth=0.3,
        )
        ax.axvline(1.0, color="gray", lw=0.8, ls="--")
        ax.set_title(f"{op} (mean {hist['mean']:.3f})", fontsize=9)
    for k in range(len(ops), rows * 2):
        axes[k // 2][k % 2].axis("off")
    fig.suptitle(f"predicted parameters, direction={dist.direction}", fontsize=10)
    fig.tight_layout()
    png_path = out / f"{stem}.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return [csv_path, png_path]
