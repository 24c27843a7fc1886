"""Leaderboard tables (CSV + aligned text) and companion figures.

Three score tables (semantic, representation, pixel) and the correlation
table, with best / second-best marking per column. Figures are rendered
with the Agg backend next to the delimited output.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .core import SCORE_DIMS, CorrelationReport

_PNG_METADATA = {"Software": "vton-eval"}


class ReportError(ValueError):
    pass


def _fmt(value, digits=3) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return f"{value:.{digits}f}"


def _mark_extremes(columns, rows, higher_better):
    """Per column: index of best and second-best row (None on ties/empties)."""
    marks = {}
    for col, better in zip(columns, higher_better):
        pairs = [(i, row[col]) for i, row in enumerate(rows)
                 if isinstance(row.get(col), (int, float)) and not (
                     isinstance(row[col], float) and math.isinf(row[col]))]
        if len(pairs) < 2:
            continue
        ordered = sorted(pairs, key=lambda p: p[1], reverse=better)
        marks[col] = (ordered[0][0], ordered[1][0])
    return marks


def render_text_table(title, columns, rows, higher_better=None) -> str:
    """Aligned text with `*` on the best and `^` on the second-best value."""
    if higher_better is None:
        higher_better = [True] * len(columns)
    marks = _mark_extremes(columns[1:], rows, higher_better[1:])
    cells = [[str(r.get(columns[0], "")) for r in rows]]
    for col in columns[1:]:
        column_cells = []
        for i, row in enumerate(rows):
            text = _fmt(row.get(col))
            best, second = marks.get(col, (None, None))
            if i == best:
                text += "*"
            elif i == second:
                text += "^"
            column_cells.append(text)
        cells.append(column_cells)
    widths = [max(len(col), *(len(c) for c in column_cells)) if rows else len(col)
              for col, column_cells in zip(columns, cells)]
    lines = [title]
    header = "  ".join(col.ljust(w) for col, w in zip(columns, widths))
    lines.append(header)
    lines.append("-" * len(header))
    for i in range(len(rows)):
        lines.append("  ".join(cells[j][i].ljust(widths[j])
                               for j in range(len(columns))))
    lines.append("(* best, ^ second best)")
    return "\n".join(lines) + "\n"


def write_csv(path, columns, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            out = []
            for col in columns:
                value = row.get(col, "")
                if value is None:
                    value = ""
                elif isinstance(value, float) and math.isinf(value):
                    value = "inf"
                out.append(value)
            writer.writerow(out)


def semantic_table(aggregates) -> tuple[list[str], list[dict]]:
    columns = ["method"]
    for dim in SCORE_DIMS + ("s_avg",):
        columns += [f"{dim}_vlm", f"{dim}_human"]
    rows = []
    for agg in sorted(aggregates, key=lambda a: a.method_id):
        row = {"method": agg.method_id}
        for dim in SCORE_DIMS + ("s_avg",):
            row[f"{dim}_vlm"] = agg.vlm.get(dim)
            row[f"{dim}_human"] = agg.human.get(dim)
        rows.append(row)
    return columns, rows


def representation_table(aggregates) -> tuple[list[str], list[dict]]:
    columns = ["method", "s_global", "s_rep_0", "s_rep_1", "s_rep_2", "s_rep_3",
               "s_rep_mean", "s_overall"]
    rows = []
    for agg in sorted(aggregates, key=lambda a: a.method_id):
        row = {"method": agg.method_id, "s_global": agg.s_global,
               "s_rep_mean": agg.s_rep_mean, "s_overall": agg.s_overall}
        for k in range(4):
            row[f"s_rep_{k}"] = agg.s_rep[k] if k < len(agg.s_rep) else None
        rows.append(row)
    return columns, rows


def pixel_table(aggregates) -> tuple[list[str], list[dict]]:
    columns = ["method", "psnr", "ssim", "lpips", "fid"]
    rows = []
    for agg in sorted(aggregates, key=lambda a: a.method_id):
        rows.append({"method": agg.method_id, "psnr": agg.psnr, "ssim": agg.ssim,
                     "lpips": agg.lpips, "fid": agg.fid})
    return columns, rows


def correlation_table(report: CorrelationReport) -> tuple[list[str], list[dict]]:
    columns = ["metric", "rho_s", "rho_k", "rho_p"]
    rows = []
    for name, entry in report.entries.items():
        rows.append({"metric": name, "rho_s": entry.rho_s, "rho_k": entry.rho_k,
                     "rho_p": entry.rho_p})
    for name, reason in report.skipped.items():
        rows.append({"metric": name, "rho_s": None, "rho_k": None, "rho_p": None})
    return columns, rows


def exclusion_table(aggregates) -> tuple[list[str], list[dict]]:
    columns = ["method", "rep_pairs", "excluded_l0", "excluded_l1", "excluded_l2",
               "excluded_l3", "excluded_pairs", "vlm_failed", "psnr_inf_pairs",
               "human_incomplete"]
    rows = []
    for agg in sorted(aggregates, key=lambda a: a.method_id):
        row = {"method": agg.method_id, "rep_pairs": agg.rep_pairs,
               "excluded_pairs": agg.rep_excluded_pairs, "vlm_failed": agg.vlm_failed,
               "psnr_inf_pairs": agg.psnr_inf_count,
               "human_incomplete": agg.human_incomplete}
        for k in range(4):
            row[f"excluded_l{k}"] = (agg.s_rep_excluded[k]
                                     if k < len(agg.s_rep_excluded) else 0)
        rows.append(row)
    return columns, rows


def write_report(aggregates, out_dir) -> list[str]:
    """Emit the three score tables, the exclusion summary, and a score figure."""
    if not aggregates:
        raise ReportError("no results to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    specs = [
        ("semantic", semantic_table(aggregates), None),
        ("representation", representation_table(aggregates), None),
        ("pixel", pixel_table(aggregates),
         [True, True, True, False, False]),  # lpips/fid: lower is better
    ]
    for name, (columns, rows), higher in specs:
        csv_path = out / f"table_{name}.csv"
        write_csv(csv_path, columns, rows)
        txt_path = out / f"table_{name}.txt"
        txt_path.write_text(render_text_table(
            f"{name} scores per method", columns, rows, higher), encoding="utf-8")
        written += [str(csv_path), str(txt_path)]

    columns, rows = exclusion_table(aggregates)
    excl_path = out / "exclusions.csv"
    write_csv(excl_path, columns, rows)
    written.append(str(excl_path))

    fig_path = out / "fig_scores.png"
    _score_figure(aggregates, fig_path)
    written.append(str(fig_path))
    return written


def _score_figure(aggregates, path) -> None:
    aggs = sorted(aggregates, key=lambda a: a.method_id)
    names = [a.method_id for a in aggs]
    series = [
        ("VLM s_avg", [a.vlm.get("s_avg") for a in aggs], 5.0),
        ("human s_avg", [a.human.get("s_avg") for a in aggs], 5.0),
        ("overall rep", [a.s_overall for a in aggs], 1.0),
    ]
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(names)), 4))
    width = 0.8 / len(series)
    for i, (label, values, scale) in enumerate(series):
        xs = [j + i * width for j in range(len(names))]
        ys = [v / scale if v is not None else 0.0 for v in values]
        ax.bar(xs, ys, width=width, label=f"{label} (/{scale:g})")
    ax.set_xticks([j + 0.4 - width / 2 for j in range(len(names))])
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("normalized score")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_METADATA)
    plt.close(fig)


def write_correlation_report(reports, aggregates, out_dir) -> list[str]:
    """Correlation tables (headline + per-dimension details) and a scatter figure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, report in reports.items():
        columns, rows = correlation_table(report)
        csv_path = out / f"correlation_{name}.csv"
        write_csv(csv_path, columns, rows)
        txt_path = out / f"correlation_{name}.txt"
        title = (f"correlation with human {report.human_column} "
                 f"({report.level} level, n={report.n})")
        txt_path.write_text(render_text_table(title, columns, rows), encoding="utf-8")
        written += [str(csv_path), str(txt_path)]
    fig_path = out / "fig_correlation.png"
    _correlation_figure(aggregates, fig_path)
    written.append(str(fig_path))
    return written


def _normalize(values):
    present = [v for v in values if v is not None]
    if not present:
        return values
    lo, hi = min(present), max(present)
    span = hi - lo or 1.0
    return [(v - lo) / span if v is not None else None for v in values]


def _correlation_figure(aggregates, path) -> None:
    aggs = sorted(aggregates, key=lambda a: a.method_id)
    human = [a.human.get("s_avg") for a in aggs]
    series = [("VLM s_avg", [a.vlm.get("s_avg") for a in aggs]),
              ("overall rep", [a.s_overall for a in aggs]),
              ("ssim", [a.ssim for a in aggs]),
              ("-lpips", [None if a.lpips is None else -a.lpips for a in aggs]),
              ("-fid", [None if a.fid is None else -a.fid for a in aggs])]
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, values in series:
        if all(v is None for v in values):
            continue
        ys = _normalize(values)
        pts = [(h, y) for h, y in zip(human, ys) if h is not None and y is not None]
        if not pts:
            continue
        ax.scatter([p[0] for p in pts], [p[1] for p in pts], label=label, s=18)
    ax.set_xlabel("human mean score")
    ax.set_ylabel("metric (normalized)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_METADATA)
    plt.close(fig)


def write_cluster_report(counts, out_dir) -> list[str]:
    """Per-cluster counts as CSV plus a distribution bar chart."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    columns = ["cluster", "count"]
    rows = [{"cluster": c, "count": counts[c]} for c in sorted(counts)]
    csv_path = out / "cluster_counts.csv"
    write_csv(csv_path, columns, rows)
    fig_path = out / "fig_cluster_sizes.png"
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar([str(r["cluster"]) for r in rows], [r["count"] for r in rows])
    ax.set_xlabel("cluster")
    ax.set_ylabel("samples")
    fig.tight_layout()
    fig.savefig(fig_path, metadata=_PNG_METADATA)
    plt.close(fig)
    return [str(csv_path), str(fig_path)]
