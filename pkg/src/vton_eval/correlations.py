"""Correlation meta-evaluation: Pearson, Spearman, Kendall tau-b.

Coefficients are computed at method level (one point per method) by
default, mirroring the leaderboard design; per-sample correlation is
available as an option. Lower-is-better metrics are negated before
correlating so that every column reads "higher agrees with humans".
"""

from __future__ import annotations

import math
from collections import defaultdict

import numpy as np

from .core import SCORE_DIMS, CorrelationEntry, CorrelationReport, HumanRating

# Metric columns correlated against the human column, in report order.
# The sign says whether lower raw values are better (negated first).
METRIC_COLUMNS = (
    ("s_avg", +1),
    ("s_overall", +1),
    ("psnr", +1),
    ("ssim", +1),
    ("lpips", -1),
    ("fid", -1),
)
VLM_DETAIL_COLUMNS = tuple((d, +1) for d in SCORE_DIMS) + (("s_avg", +1),)
REP_DETAIL_COLUMNS = (
    ("s_global", +1),
    ("s_rep_0", +1), ("s_rep_1", +1), ("s_rep_2", +1), ("s_rep_3", +1),
    ("s_rep_mean", +1),
    ("s_overall", +1),
)


class CorrelationError(ValueError):
    pass


class ConstantInputError(CorrelationError):
    """Correlation undefined: one input has no variation."""


def _check_pair(x, y, min_n: int = 3):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.size != y.size:
        raise CorrelationError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < min_n:
        raise CorrelationError(f"need at least {min_n} points, got {x.size}")
    return x, y


def average_ranks(values) -> np.ndarray:
    """Ranks 1..n with ties receiving the average of their positional ranks."""
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=np.float64)
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and v[order[j + 1]] == v[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        ranks[order[i:j + 1]] = avg
        i = j + 1
    return ranks


def pearson(x, y) -> float:
    x, y = _check_pair(x, y)
    xc = x - x.mean()
    yc = y - y.mean()
    sx = math.sqrt(float(xc @ xc))
    sy = math.sqrt(float(yc @ yc))
    if sx == 0.0 or sy == 0.0:
        raise ConstantInputError("pearson undefined for constant input")
    r = float(xc @ yc) / (sx * sy)
    return max(-1.0, min(1.0, r))


def spearman(x, y) -> float:
    """Pearson correlation of the average ranks."""
    x, y = _check_pair(x, y)
    return pearson(average_ranks(x), average_ranks(y))


def kendall_tau(x, y) -> float:
    """Tau-b: (C - D) / sqrt((C + D + Tx)(C + D + Ty)) with tie corrections.

    Tx / Ty count pairs tied only in x / only in y; pairs tied in both
    drop out entirely. O(n^2), fine at leaderboard sizes.
    """
    x, y = _check_pair(x, y)
    n = x.size
    concordant = discordant = ties_x = ties_y = 0
    for i in range(n - 1):
        for j in range(i + 1, n):
            dx = x[i] - x[j]
            dy = y[i] - y[j]
            if dx == 0.0 and dy == 0.0:
                continue
            if dx == 0.0:
                ties_x += 1
            elif dy == 0.0:
                ties_y += 1
            elif (dx > 0.0) == (dy > 0.0):
                concordant += 1
            else:
                discordant += 1
    denom = math.sqrt(float(concordant + discordant + ties_x)
                      * float(concordant + discordant + ties_y))
    if denom == 0.0:
        raise ConstantInputError("kendall tau undefined for constant input")
    tau = (concordant - discordant) / denom
    return max(-1.0, min(1.0, tau))


def aggregate_human(ratings) -> dict:
    """Per (triplet, method) mean scores; items with < 2 ratings are incomplete.

    Returns {(triplet_id, method_id): {"s_bg": ..., ..., "s_avg": ...,
    "count": n, "complete": bool}}. Incomplete items keep their means for
    inspection but are excluded from method-level averaging upstream.
    """
    grouped = defaultdict(list)
    for r in ratings:
        if not isinstance(r, HumanRating):
            raise CorrelationError(f"expected HumanRating, got {type(r).__name__}")
        grouped[(r.triplet_id, r.method_id)].append(r.scores)
    out = {}
    for key in sorted(grouped):
        scores = grouped[key]
        dims = {}
        for d, name in enumerate(SCORE_DIMS):
            dims[name] = math.fsum(s[d] for s in scores) / len(scores)
        dims["s_avg"] = math.fsum(dims[name] for name in SCORE_DIMS) / len(SCORE_DIMS)
        dims["count"] = len(scores)
        dims["complete"] = len(scores) >= 2
        out[key] = dims
    return out


def correlate_columns(metric_values, human_values) -> CorrelationEntry:
    return CorrelationEntry(
        rho_s=spearman(metric_values, human_values),
        rho_k=kendall_tau(metric_values, human_values),
        rho_p=pearson(metric_values, human_values),
    )


def correlate_all(aggregates, human_column: str = "s_avg",
                  columns=METRIC_COLUMNS, level: str = "method") -> CorrelationReport:
    """Correlate each metric column against one human column over methods.

    Metrics missing for any method are skipped with a reason rather than
    silently dropped; lower-is-better columns are negated and reported
    with a leading minus sign, matching the leaderboard convention.
    """
    rows = sorted(aggregates, key=lambda a: a.method_id)
    human = [a.human.get(human_column) for a in rows]
    if any(h is None for h in human):
        missing = [a.method_id for a, h in zip(rows, human) if h is None]
        raise CorrelationError(f"no human {human_column} mean for methods {missing}")
    entries = {}
    skipped = {}
    for name, sign in columns:
        label = name if sign > 0 else f"-{name}"
        values = [a.metric_value(name) for a in rows]
        if any(v is None for v in values):
            skipped[label] = "metric missing for at least one method"
            continue
        vals = [sign * v for v in values]
        try:
            entries[label] = correlate_columns(vals, human)
        except CorrelationError as exc:
            skipped[label] = str(exc)
    return CorrelationReport(human_column=human_column, level=level,
                             n=len(rows), entries=entries, skipped=skipped)
