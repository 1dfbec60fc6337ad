"""Delimited outputs and figures for training and evaluation runs.

CSV schema (one row per case and region, identical for the initial and
refined files): case_id, region, dice, hd95_mm, vol_pred_mm3,
vol_ref_mm3.  An undefined HD95 is an empty field.  The JSON summary
carries mean/std per region for both mask sets.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

CSV_FIELDS = ("case_id", "region", "dice", "hd95_mm", "vol_pred_mm3", "vol_ref_mm3")


def write_metrics_csv(rows, path):
    """rows: iterable of (case_id, RegionEval)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for case_id, r in rows:
            # repr keeps full float precision so summaries recompute exactly
            w.writerow([
                case_id, r.region, repr(r.dice),
                "" if r.hd95_mm is None else repr(r.hd95_mm),
                repr(r.vol_pred_mm3), repr(r.vol_ref_mm3),
            ])


def _region_summary(rows):
    by_region: dict[int, dict[str, list]] = {}
    for _, r in rows:
        d = by_region.setdefault(r.region, {"dice": [], "hd95": [], "hd95_undefined": 0})
        d["dice"].append(r.dice)
        if r.hd95_mm is None:
            d["hd95_undefined"] += 1
        else:
            d["hd95"].append(r.hd95_mm)
    out = {}
    for region, d in sorted(by_region.items()):
        out[f"region_{region}"] = {
            "n": len(d["dice"]),
            "dice_mean": float(np.mean(d["dice"])),
            "dice_std": float(np.std(d["dice"])),
            "hd95_mean": float(np.mean(d["hd95"])) if d["hd95"] else None,
            "hd95_std": float(np.std(d["hd95"])) if d["hd95"] else None,
            "hd95_undefined": d["hd95_undefined"],
        }
    return out


def evaluation_report(initial_rows, refined_rows, skipped, out_dir) -> dict:
    """Write initial/refined CSVs, the JSON summary and paired figures."""
    out_dir = Path(out_dir)
    write_metrics_csv(initial_rows, out_dir / "initial.csv")
    write_metrics_csv(refined_rows, out_dir / "refined.csv")

    summary = {
        "n_cases": len({cid for cid, _ in refined_rows}),
        "skipped_missing_gt": skipped,
        "initial": _region_summary(initial_rows),
        "refined": _region_summary(refined_rows),
    }
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)

    _paired_figure(
        [r.dice for _, r in initial_rows], [r.dice for _, r in refined_rows],
        "Dice", out_dir / "dice_paired.png",
    )
    hi = [(a.hd95_mm, b.hd95_mm) for (_, a), (_, b) in zip(initial_rows, refined_rows)
          if a.hd95_mm is not None and b.hd95_mm is not None]
    if hi:
        _paired_figure([a for a, _ in hi], [b for _, b in hi],
                       "HD95 (mm)", out_dir / "hd95_paired.png")
    return summary


def _paired_figure(before, after, label, path):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    for b, a in zip(before, after):
        ax1.plot([0, 1], [b, a], color="steelblue", alpha=0.5, marker="o", markersize=3)
    ax1.set_xticks([0, 1], ["initial", "refined"])
    ax1.set_ylabel(label)
    ax1.set_title(f"{label} per case")

    lo = min(min(before), min(after))
    hi = max(max(before), max(after))
    pad = 0.05 * (hi - lo + 1e-9)
    ax2.scatter(before, after, s=14, color="firebrick")
    ax2.plot([lo - pad, hi + pad], [lo - pad, hi + pad], "k--", linewidth=0.8)
    ax2.set_xlabel(f"initial {label}")
    ax2.set_ylabel(f"refined {label}")
    ax2.set_title("refined vs initial")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def training_figures(loss_history, val_history, out_dir):
    out_dir = Path(out_dir)
    if loss_history:
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.plot(loss_history, linewidth=0.7, color="steelblue")
        if len(loss_history) > 50:
            k = max(1, len(loss_history) // 100)
            smooth = np.convolve(loss_history, np.ones(k) / k, mode="valid")
            ax.plot(np.arange(len(smooth)) + k - 1, smooth, color="firebrick")
        ax.set_xlabel("step")
        ax.set_ylabel("total loss")
        ax.set_yscale("log")
        fig.tight_layout()
        fig.savefig(out_dir / "loss_curve.png", dpi=120)
        plt.close(fig)
    if val_history:
        fig, ax = plt.subplots(figsize=(7, 4))
        steps, scores = zip(*val_history)
        ax.plot(steps, scores, marker="o", color="seagreen")
        best = int(np.argmax(scores))
        ax.axvline(steps[best], color="gray", linestyle="--", linewidth=0.8)
        ax.set_xlabel("step")
        ax.set_ylabel("validation mean Dice")
        fig.tight_layout()
        fig.savefig(out_dir / "val_dice.png", dpi=120)
        plt.close(fig)
