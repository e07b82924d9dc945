"""Exact minimum-cost 1:1 matching between two groups."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MatchSet:
    pairs: tuple  # ((treated_index, control_index), ...) sorted by treated index
    total_distance: float
    unmatched: tuple

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    def treated(self) -> np.ndarray:
        return np.array([t for t, _ in self.pairs], dtype=np.int64)

    def controls(self) -> np.ndarray:
        return np.array([c for _, c in self.pairs], dtype=np.int64)

    def to_dict(self) -> dict:
        return {"n_pairs": self.n_pairs, "total_distance": self.total_distance,
                "pairs": [list(p) for p in self.pairs],
                "unmatched": list(self.unmatched)}


def hungarian(cost: np.ndarray):
    """Square assignment by successive shortest augmenting paths.

    Returns ``(col_of_row, u, v)`` where ``u``/``v`` are dual potentials with
    ``cost[i, j] - u[i] - v[j] >= 0`` and equality on assigned pairs. Ties in
    the Dijkstra-like column choice go to the lowest column index.
    """
    cost = np.asarray(cost, dtype=float)
    n = cost.shape[0]
    if cost.shape != (n, n):
        raise ValueError("cost matrix must be square")
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    row_of = np.zeros(n + 1, dtype=np.int64)  # 1-based row matched to column j; 0 = free
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        row_of[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of[j0]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            free = ~used[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[row_of[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if row_of[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            row_of[j0] = row_of[j1]
            j0 = j1
    col_of = np.empty(n, dtype=np.int64)
    col_of[row_of[1:] - 1] = np.arange(n)
    return col_of, u[1:], v[1:]


def _lexicographic_refine(cost, col_of, u, v, n_rows, tol):
    """Among optimal assignments pick the lexicographically smallest for rows < n_rows.

    Optimal assignments are exactly the perfect matchings on tight edges
    (zero reduced cost), so each row in turn takes the smallest column that
    can be reached by an alternating cycle through tight edges of rows and
    columns not fixed yet.
    """
    n = cost.shape[0]
    tight = (cost - u[:, None] - v[None, :]) <= tol
    col_of = col_of.copy()
    row_of = np.empty(n, dtype=np.int64)
    row_of[col_of] = np.arange(n)
    fixed_row = np.zeros(n, dtype=bool)
    fixed_col = np.zeros(n, dtype=bool)
    for r in range(n_rows):
        for c in np.flatnonzero(tight[r]):
            if fixed_col[c]:
                continue
            if col_of[r] == c:
                break
            path = _alternating_path(tight, col_of, row_of, fixed_row, fixed_col,
                                     start_row=row_of[c], banned_col=c, target_col=col_of[r],
                                     banned_row=r)
            if path is None:
                continue
            # row_of[c] -> path columns..., ends at target; r takes c
            old = col_of[r]
            rows_cols = path
            for rr, cc in rows_cols:
                col_of[rr] = cc
                row_of[cc] = rr
            col_of[r] = c
            row_of[c] = r
            assert old in {cc for _, cc in rows_cols}
            break
        fixed_row[r] = True
        fixed_col[col_of[r]] = True
    return col_of


def _alternating_path(tight, col_of, row_of, fixed_row, fixed_col, start_row,
                      banned_col, target_col, banned_row):
    """BFS for reassignments moving ``start_row`` off its column and ending at ``target_col``."""
    n = tight.shape[0]
    parent = {}
    seen = np.zeros(n, dtype=bool)
    seen[banned_col] = True
    queue = deque([start_row])
    while queue:
        row = queue.popleft()
        for col in np.flatnonzero(tight[row] & ~fixed_col & ~seen):
            seen[col] = True
            parent[col] = row
            if col == target_col:
                out = []
                cc = col
                while True:
                    rr = parent[cc]
                    out.append((rr, cc))
                    if rr == start_row:
                        return out[::-1]
                    cc = col_of[rr]
            nxt = row_of[col]
            if nxt != banned_row and not fixed_row[nxt]:
                queue.append(nxt)
    return None


def optimal_assignment(cost: np.ndarray, tie_tol: float | None = None):
    """Minimum-cost assignment of every row of a (k x m, k <= m) cost matrix.

    Among assignments within ``tie_tol`` of optimal on every edge, the one
    with the lexicographically smallest column sequence is returned.
    Returns the column index for each row.
    """
    cost = np.asarray(cost, dtype=float)
    k, m = cost.shape
    if k > m:
        raise ValueError("more rows than columns")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix contains non-finite entries")
    if tie_tol is None:
        tie_tol = 1e-9 * (1.0 + float(np.max(np.abs(cost))) if cost.size else 1.0)
    square = np.zeros((m, m))
    square[:k] = cost
    col_of, u, v = hungarian(square)
    col_of = _lexicographic_refine(square, col_of, u, v, k, tie_tol)
    return col_of[:k]


def match_groups(treated_idx, control_idx, dist, tie_tol=None) -> MatchSet:
    """Optimal 1:1 matching of the smaller group into the larger.

    ``dist[a, b]`` is the distance between ``treated_idx[a]`` and
    ``control_idx[b]``. Rows of the assignment problem are the smaller group
    in index order; when the groups have equal size treated subjects are the
    rows.
    """
    treated_idx = np.asarray(treated_idx, dtype=np.int64)
    control_idx = np.asarray(control_idx, dtype=np.int64)
    dist = np.asarray(dist, dtype=float)
    if dist.shape != (len(treated_idx), len(control_idx)):
        raise ValueError("distance matrix shape does not match the groups")
    if len(treated_idx) <= len(control_idx):
        cols = optimal_assignment(dist, tie_tol)
        pairs = [(int(treated_idx[a]), int(control_idx[b])) for a, b in enumerate(cols)]
        total = float(sum(dist[a, b] for a, b in enumerate(cols)))
        unmatched = sorted(set(control_idx.tolist()) - {c for _, c in pairs})
    else:
        cols = optimal_assignment(dist.T, tie_tol)
        pairs = [(int(treated_idx[b]), int(control_idx[a])) for a, b in enumerate(cols)]
        total = float(sum(dist[b, a] for a, b in enumerate(cols)))
        unmatched = sorted(set(treated_idx.tolist()) - {t for t, _ in pairs})
    pairs.sort()
    return MatchSet(tuple(pairs), total, tuple(unmatched))
