"""Wilcoxon signed-rank test for paired run scores.

Run comparisons here involve ten-ish paired values, far below the asymptotic
regime, so small samples take an exact path: the null distribution of the
positive-rank sum is enumerated over all 2^n sign assignments. Larger samples
fall back to the tie-corrected normal approximation with continuity
correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DataError

EXACT_LIMIT = 20

ALTERNATIVES = ("two-sided", "greater", "less")


@dataclass(frozen=True)
class WilcoxonResult:
    w_statistic: float  # sum of ranks of positive differences
    p_value: float
    n_effective: int  # pairs remaining after zero differences are dropped
    method: str  # "exact" or "normal-approx"
    alternative: str


def _midranks(values: np.ndarray) -> np.ndarray:
    # average rank across ties; ranks are 1-based
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def wilcoxon_signed_rank(a, b, alternative: str = "two-sided") -> WilcoxonResult:
    """Paired signed-rank test of ``a`` against ``b``.

    Zero differences are dropped, tied absolute differences get mid-ranks,
    and W is the sum of ranks where a > b. ``alternative="greater"`` asks
    whether ``a`` tends to exceed ``b``. Two-sided p is min(1, 2*min(one-sided)).
    """
    if alternative not in ALTERNATIVES:
        raise ContractError(f"alternative must be one of {ALTERNATIVES}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 1:
        raise ContractError("samples must be equal-length non-empty vectors")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ContractError("samples must be finite")

    diff = a - b
    diff = diff[diff != 0.0]
    n = diff.size
    if n == 0:
        raise DataError("degenerate sample: all paired differences are zero")

    ranks = _midranks(np.abs(diff))
    w = float(ranks[diff > 0].sum())

    if n <= EXACT_LIMIT:
        # mid-ranks are multiples of 1/2; doubling makes every sum an exact integer
        doubled = np.rint(ranks * 2.0).astype(np.int64)
        sums = np.zeros(1, dtype=np.int64)
        for r in doubled:
            sums = np.concatenate([sums, sums + r])
        w2 = int(round(w * 2.0))
        total = float(sums.size)
        p_greater = float(np.count_nonzero(sums >= w2)) / total
        p_less = float(np.count_nonzero(sums <= w2)) / total
        method = "exact"
    else:
        mean = n * (n + 1) / 4.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        tie_term = float(((tie_counts**3) - tie_counts).sum()) / 48.0
        var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
        sd = math.sqrt(var)
        # 0.5 continuity correction pulls each tail toward the center
        p_greater = 0.5 * math.erfc((w - mean - 0.5) / (sd * math.sqrt(2.0)))
        p_less = 0.5 * math.erfc((mean - w - 0.5) / (sd * math.sqrt(2.0)))
        method = "normal-approx"

    if alternative == "greater":
        p = p_greater
    elif alternative == "less":
        p = p_less
    else:
        p = min(1.0, 2.0 * min(p_greater, p_less))
    return WilcoxonResult(w_statistic=w, p_value=float(p), n_effective=n, method=method, alternative=alternative)
