"""Wall-clock scaling of the alignment routes."""

from __future__ import annotations

import statistics
import time

import numpy as np

from .align import alignment_dp, alignment_naive


def median_time(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return statistics.median(times)


def run_bench(T_list, repeats: int = 5, naive: bool = True, naive_repeats: int | None = None,
              seed: int = 0) -> list[dict]:
    """Median timings (seconds) of ``alignment_dp`` and ``alignment_naive`` with ``U = T``.

    Each call is warmed up once first so compilation stays out of the numbers.
    The DP fills a preallocated output, so fresh-page faults on large results
    do not mask its O(T^2) cost.
    Rows carry the ratio to the previous ``T`` in the list.
    """
    if any(int(T) < 1 for T in T_list):
        raise ValueError("T values must be positive")
    rng = np.random.default_rng(seed)
    rows = []
    for T in map(int, T_list):
        e = rng.uniform(0.05, 0.95, T)
        out = alignment_dp(e, T)
        row = {"T": T, "dp_seconds": median_time(lambda: alignment_dp(e, T, out=out), repeats)}
        if naive:
            alignment_naive(e[: min(T, 8)])
            row["naive_seconds"] = median_time(lambda: alignment_naive(e, T),
                                               naive_repeats or repeats)
        if rows:
            prev = rows[-1]
            row["dp_ratio"] = row["dp_seconds"] / prev["dp_seconds"]
            if naive:
                row["naive_ratio"] = row["naive_seconds"] / prev["naive_seconds"]
        rows.append(row)
    return rows


def format_csv(rows) -> str:
    cols = ["T", "dp_seconds", "naive_seconds", "dp_ratio", "naive_ratio"]
    cols = [c for c in cols if any(c in r for r in rows)]
    out = [",".join(cols)]
    for r in rows:
        out.append(",".join("" if c not in r else str(r[c]) if c == "T" else f"{r[c]:.6g}"
                            for c in cols))
    return "\n".join(out) + "\n"
