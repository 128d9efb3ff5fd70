"""Report rendering: summary JSON, CSV tables and matplotlib figures.

Everything under ``<out>/report`` is regenerated from earlier stage
outputs and is deterministic: fixed figure geometry, pinned PNG metadata,
sorted JSON keys.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIG_DPI = 110
PNG_METADATA = {"Software": "ichcast"}

MODEL_LABELS = {"model": "Optimal", "bl1": "BL1: ICP morphology", "bl2": "BL2: last ICP + crisis time"}
PR_METRIC_COLUMNS = ("prec_at_75_rec", "prec_at_90_rec", "auprc")
ROC_METRIC_COLUMNS = ("spec_at_75_sens", "spec_at_90_sens", "auroc")


def _fmt(value) -> str:
    if value is None:
        return "N/A"
    return f"{value:.3f}"


def _metric_cell(entry: dict) -> str:
    if entry.get("point") is None:
        return "N/A"
    half = (entry["ci_high"] - entry["ci_low"]) / 2.0
    return f"{entry['point']:.3f} +/- {half:.3f}"


def _write_metrics_table(metrics: dict, path: Path) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model"] + list(PR_METRIC_COLUMNS) + list(ROC_METRIC_COLUMNS))
        for model in ("model", "bl1", "bl2"):
            if model not in metrics["models"]:
                continue
            entry = metrics["models"][model]
            row = [MODEL_LABELS[model]]
            for col in PR_METRIC_COLUMNS + ROC_METRIC_COLUMNS:
                row.append(_metric_cell(entry[col]) if col in entry else "N/A")
            writer.writerow(row)


def _pr_figure(ctx, plan, model_names, path: Path) -> None:
    from .evaluate import _sweep

    recall_grid = np.linspace(0.0, 1.0, 201)
    fig, ax = plt.subplots(figsize=(6.0, 4.2), dpi=FIG_DPI)
    colors = {"model": "tab:blue", "bl1": "tab:orange", "bl2": "tab:green"}
    for model in model_names:
        stack = []
        for k in range(len(plan.splits)):
            data = np.load(ctx.out / "eval" / f"scores_split{k:02d}.npz")
            key = f"{model}_scores"
            if key not in data:
                continue
            curve = _sweep(data[key], data["labels"])
            # precision as a step function of recall, interpolated on a grid
            prec = np.interp(
                recall_grid, curve.recall, curve.precision,
                left=curve.precision[0], right=curve.precision[-1],
            )
            stack.append(prec)
            ax.plot(recall_grid, prec, color=colors[model], alpha=0.15, lw=0.7)
        if stack:
            ax.plot(
                recall_grid, np.mean(np.vstack(stack), axis=0),
                color=colors[model], lw=2.0, label=MODEL_LABELS[model],
            )
    ax.set_xlabel("Recall")
    ax.set_ylabel("Precision")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower left", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)


def _timeliness_figure(timeliness: dict, path: Path) -> None:
    hours = np.arange(1, 9)
    recall = np.array([
        np.nan if r is None else r for r in timeliness["pooled_recall_per_hour"]
    ])
    fig, ax = plt.subplots(figsize=(6.0, 4.2), dpi=FIG_DPI)
    ax.bar(hours, np.nan_to_num(recall), color="tab:blue", width=0.7)
    ax.set_xlabel("Hours before hypertension onset")
    ax.set_ylabel(f"Alarm recall at precision {timeliness['target_precision']:.2f}")
    ax.set_xticks(hours)
    ax.set_ylim(0, 1.05)
    ax.invert_xaxis()
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)


def _importance_figure(ctx, path: Path, top_n: int = 20) -> None:
    rank_path = ctx.out / "rank" / "rankings.csv"
    rows = list(csv.DictReader(rank_path.open()))[:top_n]
    names = [r["feature"] for r in rows][::-1]
    values = [float(r["mean_importance"]) for r in rows][::-1]
    fig, ax = plt.subplots(figsize=(7.5, 6.0), dpi=FIG_DPI)
    ax.barh(np.arange(len(names)), values, color="tab:blue")
    ax.set_yticks(np.arange(len(names)))
    ax.set_yticklabels(names, fontsize=7)
    ax.set_xlabel("Mean |attribution| on validation rows")
    ax.grid(alpha=0.3, axis="x")
    fig.tight_layout()
    fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)


def render_report(ctx) -> list[Path]:
    """Build report.json, the CSV tables and the PNG figures."""
    from .config import config_hash
    from .pipeline import load_splits

    report_dir = ctx.out / "report"
    tables_dir = report_dir / "tables"
    figures_dir = report_dir / "figures"
    tables_dir.mkdir(parents=True, exist_ok=True)
    figures_dir.mkdir(parents=True, exist_ok=True)

    metrics = json.loads((ctx.out / "eval" / "metrics.json").read_text())
    timeliness = json.loads((ctx.out / "eval" / "timeliness.json").read_text())
    label_summary = json.loads((ctx.out / "labels" / "summary.json").read_text())
    plan = load_splits(ctx)

    totals = {"positive": 0, "negative": 0, "excluded_in_event": 0,
              "excluded_truncated": 0, "events": 0}
    for seg, entry in label_summary.items():
        for key in ("positive", "negative", "excluded_in_event", "excluded_truncated"):
            totals[key] += entry[key]
        totals["events"] += len(entry["events"])
    labeled = totals["positive"] + totals["negative"]
    prevalence = totals["positive"] / labeled if labeled else None

    outputs: list[Path] = []

    metrics_csv = tables_dir / "model_metrics.csv"
    _write_metrics_table(metrics, metrics_csv)
    outputs.append(metrics_csv)

    timeliness_csv = tables_dir / "timeliness.csv"
    timeliness_csv.write_text((ctx.out / "eval" / "timeliness.csv").read_text())
    outputs.append(timeliness_csv)

    for name in ("rankings.csv", "rankings_grouped.csv"):
        src = ctx.out / "rank" / name
        dst = tables_dir / name
        dst.write_text(src.read_text())
        outputs.append(dst)

    model_names = [m for m in ("model", "bl1", "bl2") if m in metrics["models"]]
    pr_png = figures_dir / "pr_curves.png"
    _pr_figure(ctx, plan, model_names, pr_png)
    outputs.append(pr_png)
    tl_png = figures_dir / "timeliness.png"
    _timeliness_figure(timeliness, tl_png)
    outputs.append(tl_png)
    imp_png = figures_dir / "feature_importance.png"
    _importance_figure(ctx, imp_png)
    outputs.append(imp_png)

    top_rows = list(csv.DictReader((ctx.out / "rank" / "rankings.csv").open()))[:20]
    report = {
        "config_hash": config_hash(ctx.cfg),
        "seed": ctx.cfg["seed"],
        "cohort": {
            "n_segments": len(label_summary),
            "n_events": totals["events"],
            "label_counts": {k: totals[k] for k in (
                "positive", "negative", "excluded_in_event", "excluded_truncated")},
            "positive_prevalence": prevalence,
        },
        "n_splits": len(plan.splits),
        "metrics": metrics["models"],
        "timeliness": {
            "target_precision": timeliness["target_precision"],
            "pooled_recall_per_hour": timeliness["pooled_recall_per_hour"],
        },
        "top_features": [
            {"rank": int(r["global_rank"]), "feature": r["feature"],
             "mean_rank": float(r["mean_rank"])}
            for r in top_rows
        ],
    }
    report_path = report_dir / "report.json"
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    outputs.append(report_path)
    return outputs
