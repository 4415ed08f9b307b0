"""Deterministic linear assignment with lexicographic tie-breaking.

scipy's solver is optimal but chooses arbitrarily among co-optimal
assignments; scoring and label alignment need a reproducible choice, so
among all optimal assignments we return the one whose (row, col) pair list
is lexicographically smallest.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment


def _opt_value(cost: np.ndarray, maximize: bool) -> float:
    if cost.size == 0 or 0 in cost.shape:
        return 0.0
    r, c = linear_sum_assignment(cost, maximize=maximize)
    return float(cost[r, c].sum())


def lexmin_assignment(cost: np.ndarray, maximize: bool = False) -> list[tuple[int, int]]:
    """Optimal assignment covering the smaller axis of ``cost``.

    Returns (row, col) pairs sorted by row. Among optimal assignments the
    lexicographically smallest pair sequence is chosen, comparing column
    indices row by row (optimality checked to 1e-9 relative tolerance, so
    exact ties break deterministically and near-ties cannot flip).
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    n_rows, n_cols = cost.shape
    if n_rows == 0 or n_cols == 0:
        return []
    transposed = n_rows > n_cols
    m = cost.T if transposed else cost
    rows, cols = m.shape

    best = _opt_value(m, maximize)
    tol = 1e-9 * max(1.0, abs(best))
    available = list(range(cols))
    chosen: list[tuple[int, int]] = []
    fixed_sum = 0.0
    for i in range(rows):
        remaining_rows = list(range(i + 1, rows))
        for j in available:
            rest = [c for c in available if c != j]
            sub = m[np.ix_(remaining_rows, rest)] if remaining_rows else np.empty((0, 0))
            value = fixed_sum + m[i, j] + _opt_value(sub, maximize)
            if abs(value - best) <= tol:
                chosen.append((i, j))
                fixed_sum += m[i, j]
                available.remove(j)
                break
        else:  # numerically impossible unless tol is violated by conditioning
            r, c = linear_sum_assignment(m, maximize=maximize)
            return sorted(
                ((int(b), int(a)) for a, b in zip(r, c)) if transposed
                else ((int(a), int(b)) for a, b in zip(r, c))
            )
    if transposed:
        return sorted((j, i) for i, j in chosen)
    return chosen
