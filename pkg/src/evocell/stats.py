"""Rank statistics for the search loop and experiment reports."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["average_ranks", "spearman", "quantile_index", "summarize_runs"]


def average_ranks(values) -> np.ndarray:
    """1-based ranks of ``values``; tied entries share the mean of their positional ranks."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("cannot rank an empty sequence")
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot rank non-finite values")
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=float)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and x[order[j + 1]] == x[order[i]]:
            j += 1
        # positions i..j (0-based) all hold the same value
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float | None:
    """Rank correlation computed as the Pearson correlation of average ranks.

    Returns None when either side has zero rank variance (fewer than two
    distinct values), which callers must treat as "no usable signal" rather
    than as a correlation of zero.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("need at least two pairs")
    rx = average_ranks(x)
    ry = average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    vx = float(rx @ rx)
    vy = float(ry @ ry)
    if vx == 0.0 or vy == 0.0:
        return None
    return float((rx @ ry) / math.sqrt(vx * vy))


def quantile_index(n: int, q: float) -> int:
    """Index of the q-quantile element in a sorted sample of size n.

    Uses round-half-up on q*(n-1), clamped to the valid index range.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"quantile {q} outside [0, 1]")
    idx = int(math.floor(q * (n - 1) + 0.5))
    return min(max(idx, 0), n - 1)


def summarize_runs(finals) -> tuple[float, float, float, float]:
    """(mean, sample std, min, max) of per-run final scores.

    Sample std uses the n-1 denominator; a single run reports std 0.0.
    """
    x = np.asarray(finals, dtype=float)
    if x.size == 0:
        raise ValueError("no runs to summarize")
    std = float(x.std(ddof=1)) if x.size > 1 else 0.0
    return float(x.mean()), std, float(x.min()), float(x.max())
