"""Delimited reports and matplotlib figures for training and evaluation."""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

LOSS_COLUMNS = ["step", "p_current", "mw", "cc", "id", "geo", "pix",
                "adv_g", "adv_d", "total_g", "total_d", "paired"]


def write_training_report(history: list, out_dir: str) -> dict:
    """Training log as CSV plus a loss-curve figure; returns written paths."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "train_log.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOSS_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        for row in history:
            writer.writerow(row)

    fig_path = os.path.join(out_dir, "loss_curves.png")
    steps = [row["step"] for row in history]
    fig, axes = plt.subplots(2, 1, figsize=(8, 8), sharex=True)
    for term in ("mw", "cc", "id", "geo", "pix"):
        axes[0].plot(steps, [row[term] for row in history], label=term, lw=0.8)
    axes[0].set_ylabel("generator terms")
    axes[0].legend(loc="upper right", fontsize=8)
    axes[1].plot(steps, [row["adv_g"] for row in history], label="adv_g", lw=0.8)
    axes[1].plot(steps, [row["adv_d"] for row in history], label="adv_d", lw=0.8)
    axes[1].set_ylabel("adversarial terms")
    axes[1].set_xlabel("step")
    axes[1].legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(fig_path, dpi=110)
    plt.close(fig)
    return {"csv": csv_path, "figure": fig_path}


def write_encoder_report(history: list, out_dir: str) -> dict:
    """Per-epoch regression losses as CSV plus a validation-curve figure."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "encoder_log.csv")
    group_names = sorted(history[0].group_val_mse) if history else []
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_mse", "val_mse"]
                        + [f"val_mse_{g}" for g in group_names])
        for row in history:
            writer.writerow([row.epoch, row.train_mse, row.val_mse]
                            + [row.group_val_mse.get(g, "") for g in group_names])

    fig_path = os.path.join(out_dir, "encoder_curves.png")
    fig, ax = plt.subplots(figsize=(8, 5))
    ax.plot([r.epoch for r in history], [r.train_mse for r in history], label="train")
    ax.plot([r.epoch for r in history], [r.val_mse for r in history], label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("normalized coefficient MSE")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(fig_path, dpi=110)
    plt.close(fig)
    return {"csv": csv_path, "figure": fig_path}


def write_metrics_report(report, out_dir: str) -> dict:
    """Evaluation metrics: JSON summary, per-pair CSV, and histograms."""
    os.makedirs(out_dir, exist_ok=True)
    json_path = os.path.join(out_dir, "metrics.json")
    with open(json_path, "w") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)

    csv_path = os.path.join(out_dir, "metrics_pairs.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source_id", "driving_id", "cos_sim", "cos_sim_driving",
                         "pose_mse", "exp_mse", "exp_mse_baseline"])
        for row in report.pairs:
            writer.writerow([row.source_id, row.driving_id, row.cos_sim,
                             row.cos_sim_driving, row.pose_mse, row.exp_mse,
                             row.exp_mse_baseline])

    fig_path = os.path.join(out_dir, "metrics_hist.png")
    fig, axes = plt.subplots(1, 3, figsize=(12, 4))
    for ax, key, label in [
        (axes[0], "cos_sim", "identity cosine (output vs source)"),
        (axes[1], "pose_mse", "pose MSE (output vs driving)"),
        (axes[2], "exp_mse", "expression MSE (output vs driving)"),
    ]:
        values = [getattr(row, key) for row in report.pairs]
        ax.hist(values, bins=20)
        ax.set_xlabel(label)
    fig.tight_layout()
    fig.savefig(fig_path, dpi=110)
    plt.close(fig)
    return {"json": json_path, "csv": csv_path, "figure": fig_path}
