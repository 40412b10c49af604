"""Bench report rendering: JSON, a delimited latency table, and a figure.

``write_report_files`` drops three artifacts next to each other:
``<stem>.json`` (full report), ``<stem>.csv`` (the latency table, one
row per engine, p50/p95 per query), and ``<stem>.png`` (grouped bars).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")  # headless rendering only

import matplotlib.pyplot as plt

QUERY_TITLES = {
    "q1": "Q1: full extraction",
    "q2": "Q2: WHERE predicate",
    "q3": "Q3: GROUP BY",
}


def latency_table(report: dict) -> tuple[list[str], list[list]]:
    """Rows: engine configuration; columns: p50/p95 per query pattern."""
    queries = report["queries"]
    header = ["configuration"]
    for q in queries:
        header += [f"{q}_p50_ms", f"{q}_p95_ms"]
    rows = []
    for engine in report["engines"]:
        row: list = [f"{engine} -> {report['table']['name']}"]
        for q in queries:
            cell = report["cells"][engine][q]
            row += [round(cell.get("p50_ms", float("nan")), 3),
                    round(cell.get("p95_ms", float("nan")), 3)]
        rows.append(row)
    return header, rows


def write_csv(report: dict, path: Path) -> None:
    header, rows = latency_table(report)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def render_figure(report: dict, path: Path) -> None:
    queries = report["queries"]
    engines = report["engines"]
    fig, ax = plt.subplots(figsize=(1.8 + 2.2 * len(queries), 4.2))
    width = 0.8 / max(1, 2 * len(engines))
    ticks = range(len(queries))
    for e_i, engine in enumerate(engines):
        p50 = [report["cells"][engine][q].get("p50_ms", 0.0) for q in queries]
        p95 = [report["cells"][engine][q].get("p95_ms", 0.0) for q in queries]
        base = [t + (2 * e_i - len(engines)) * width + width / 2 for t in ticks]
        ax.bar(base, p50, width, label=f"{engine} p50")
        ax.bar([b + width for b in base], p95, width, label=f"{engine} p95",
               alpha=0.55)
    ax.set_xticks(list(ticks))
    ax.set_xticklabels([QUERY_TITLES.get(q, q) for q in queries])
    ax.set_ylabel("latency (ms)")
    runs = report["runs"]
    cold = "cold" if report["cold"] else "warm"
    ax.set_title(
        f"{report['table']['name']}: {runs} {cold} runs, "
        f"{report['table']['row-count']:,} rows / {report['table']['data-files']} files"
    )
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report_files(report: dict, out_json: str | Path) -> dict[str, Path]:
    out_json = Path(out_json)
    out_json.parent.mkdir(parents=True, exist_ok=True)
    out_json.write_text(
        json.dumps(report, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    out_csv = out_json.with_suffix(".csv")
    write_csv(report, out_csv)
    out_png = out_json.with_suffix(".png")
    render_figure(report, out_png)
    return {"json": out_json, "csv": out_csv, "png": out_png}
