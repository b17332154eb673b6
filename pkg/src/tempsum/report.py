"""Table-style CSV, metrics JSON and PNG plots from a list of EvalReports."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

from .train import EvalReport

REPORT_HEADER = ["summary_type", "model", "exact_match", "token_acc", "bleu", "n_test"]
TABLE_METRICS = ("exact_match", "bleu")


def _ordered(values) -> list:
    seen: list = []
    for v in values:
        if v not in seen:
            seen.append(v)
    return seen


def table_rows(reports: Sequence[EvalReport]) -> tuple[list[str], list[list]]:
    """Wide table: one row per summary type plus an "Average" row; columns model × metric.

    The average is the arithmetic mean over the types that have a value for
    that column.
    """
    models = _ordered(r.model for r in reports)
    types = _ordered(r.summary_type for r in reports)
    cell = {(r.summary_type, r.model): r for r in reports}
    header = ["summary_type"] + [f"{m}_{k}" for m in models for k in TABLE_METRICS]
    rows = []
    for t in types:
        row: list = [t]
        for m in models:
            r = cell.get((t, m))
            row.extend(getattr(r, k) if r else "" for k in TABLE_METRICS)
        rows.append(row)
    avg: list = ["Average"]
    for col in range(1, len(header)):
        vals = [row[col] for row in rows if row[col] != ""]
        avg.append(sum(vals) / len(vals) if vals else "")
    rows.append(avg)
    return header, rows


def metrics_document(reports: Sequence[EvalReport]) -> dict:
    return {"reports": [r.to_dict() for r in reports]}


def emit_report(reports: Sequence[EvalReport], out_dir: str | Path, plots: bool = True) -> list[Path]:
    if not reports:
        raise ValueError("no reports to write")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    long_path = out / "report.csv"
    with long_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in reports:
            w.writerow([r.summary_type, r.model, repr(r.exact_match), repr(r.token_accuracy), repr(r.bleu), r.n_test])
    written.append(long_path)

    header, rows = table_rows(reports)
    table_path = out / "table.csv"
    with table_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows([[repr(v) if isinstance(v, float) else v for v in row] for row in rows])
    written.append(table_path)

    json_path = out / "metrics.json"
    json_path.write_text(json.dumps(metrics_document(reports), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    written.append(json_path)

    if plots:
        written.extend(_plots(reports, out))
    return written


def _plots(reports: Sequence[EvalReport], out: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    fig, ax = plt.subplots(figsize=(7, 4))
    for r in reports:
        if r.loss_curve:
            ax.plot(range(1, len(r.loss_curve) + 1), r.loss_curve, label=f"{r.summary_type} / {r.model}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("train loss")
    ax.set_yscale("log")
    if len(reports) <= 12:
        ax.legend(fontsize=6)
    fig.tight_layout()
    paths.append(out / "loss_curves.png")
    fig.savefig(paths[-1], dpi=100)
    plt.close(fig)

    models = _ordered(r.model for r in reports)
    types = _ordered(r.summary_type for r in reports)
    cell = {(r.summary_type, r.model): r.exact_match for r in reports}
    fig, ax = plt.subplots(figsize=(max(6, len(types) * 0.7), 4))
    width = 0.8 / len(models)
    for j, m in enumerate(models):
        xs = [i + j * width for i in range(len(types))]
        ax.bar(xs, [cell.get((t, m), 0.0) for t in types], width=width, label=m)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(types))])
    ax.set_xticklabels(types, rotation=60, ha="right", fontsize=7)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("exact-match accuracy")
    ax.legend(fontsize=7)
    fig.tight_layout()
    paths.append(out / "exact_match.png")
    fig.savefig(paths[-1], dpi=100)
    plt.close(fig)
    return paths


def load_reports(paths: Sequence[str | Path]) -> list[EvalReport]:
    """Reports from metrics.json files (or directories containing one)."""
    out = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            p = p / "metrics.json"
        doc = json.loads(p.read_text(encoding="utf-8"))
        out.extend(EvalReport.from_dict(d) for d in doc["reports"])
    return out
