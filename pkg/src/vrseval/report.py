"""Rendering of evaluation reports: plain-text tables, per-category CSV,
and matplotlib figures written next to the JSON output."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import EvalReport

# Stripped-down savefig metadata so repeated runs produce identical bytes.
_PNG_META = {"Software": "vrseval"}


def summary_table(report: EvalReport) -> str:
    """Plain-text summary mirroring the usual benchmark table layouts."""
    lines = [f"protocol: {report.protocol}"]
    agg = report.aggregates
    if report.protocol == "hoi_map":
        header = f"{'Full':>10} {'Rare':>10} {'Non-Rare':>10}"
        row = " ".join(
            f"{agg.get(k, float('nan')) * 100:>10.2f}"
            for k in ("full_map", "rare_map", "nonrare_map")
        )
        lines += [header, row]
        for name in ("unseen_map", "seen_map"):
            if name in agg:
                lines.append(f"{name:>12}: {agg[name] * 100:.2f}")
    elif report.protocol == "psg_recall":
        ks = report.rule.get("ks", [])
        lines.append(f"{'K':>6} {'R@K':>10} {'mR@K':>10}")
        for k in ks:
            lines.append(
                f"{k:>6} {agg[f'recall@{k}'] * 100:>10.2f} "
                f"{agg[f'mean_recall@{k}'] * 100:>10.2f}"
            )
    elif report.protocol.startswith("vcoco_role_ap"):
        for key in sorted(agg):
            lines.append(f"{key}: {agg[key] * 100:.2f}")
    elif report.protocol == "prompt_siou":
        lines.append(f"{'S-IoU':>10} {'O-IoU':>10}")
        lines.append(f"{agg['s_iou']:>10.3f} {agg['o_iou']:>10.3f}")
    else:
        for key in sorted(agg):
            lines.append(f"{key}: {agg[key]}")
    if report.flags:
        lines.append(f"flags: {len(report.flags)}")
    return "\n".join(lines) + "\n"


def per_category_csv(report: EvalReport) -> str:
    """Delimited per-category values (category id, label, gt count, value)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["category", "label", "gt_count", "value"])
    for key in sorted(report.per_category, key=_category_sort_key):
        writer.writerow([
            key,
            report.category_labels.get(key, ""),
            report.gt_counts.get(key, 0),
            f"{report.per_category[key]:.10g}",
        ])
    return buf.getvalue()


def _category_sort_key(key: str):
    return (0, int(key), "") if key.isdigit() else (1, 0, key)


def render_figures(report: EvalReport, out_dir: str | Path, stem: str) -> list[Path]:
    """Write the report's figures as PNG files; returns the paths written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    fig_path = out_dir / f"{stem}.aggregates.png"
    _bar_figure(
        fig_path,
        list(report.aggregates.keys()),
        list(report.aggregates.values()),
        title=f"{report.protocol}: aggregate metrics",
    )
    written.append(fig_path)

    if report.per_category:
        items = sorted(report.per_category.items(), key=lambda kv: -kv[1])[:30]
        labels = [report.category_labels.get(k, k) for k, _ in items]
        values = [v for _, v in items]
        fig_path = out_dir / f"{stem}.per_category.png"
        _bar_figure(fig_path, labels, values,
                    title=f"{report.protocol}: top categories", horizontal=True)
        written.append(fig_path)

    if report.protocol == "psg_recall":
        ks = report.rule.get("ks", [])
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.plot(ks, [report.aggregates[f"recall@{k}"] for k in ks], marker="o", label="R@K")
        ax.plot(ks, [report.aggregates[f"mean_recall@{k}"] for k in ks], marker="s", label="mR@K")
        ax.set_xlabel("K")
        ax.set_ylabel("recall")
        ax.set_ylim(0, 1.05)
        ax.legend()
        ax.set_title("triplet recall vs K")
        fig.tight_layout()
        fig_path = out_dir / f"{stem}.recall_curve.png"
        _save_atomic(fig, fig_path)
        written.append(fig_path)
    return written


def _save_atomic(fig, path: Path):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        fig.savefig(tmp, format="png", dpi=120, metadata=_PNG_META)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    finally:
        plt.close(fig)


def _bar_figure(path: Path, labels, values, title: str, horizontal: bool = False):
    n = max(len(labels), 1)
    if horizontal:
        fig, ax = plt.subplots(figsize=(7, max(2.5, 0.28 * n)))
        ax.barh(range(n), values, color="#4878d0")
        ax.set_yticks(range(n))
        ax.set_yticklabels(labels, fontsize=7)
        ax.invert_yaxis()
        ax.set_xlabel("value")
    else:
        fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * n), 3.5))
        ax.bar(range(n), values, color="#4878d0")
        ax.set_xticks(range(n))
        ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
        ax.set_ylabel("value")
    ax.set_title(title, fontsize=10)
    fig.tight_layout()
    _save_atomic(fig, path)
