"""Square linear assignment (Hungarian / Kuhn-Munkres with potentials).

Among all optimal permutations the solver returns the lexicographically
smallest one (row 0 takes the lowest column it can, then row 1, ...), so
ties are broken deterministically by row index, then column index.
"""

from __future__ import annotations

from collections import deque

import numpy as np


def _solve_min(cost: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shortest-augmenting-path Hungarian; returns (row->col, u, v)."""
    n = cost.shape[0]
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=int)  # p[j]: row (1-based) matched to column j
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = cost[i0 - 1, :] - u[i0] - v[1:]
            better = free[1:] & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free[1:], minv[1:], inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    row_to_col = np.empty(n, dtype=int)
    for j in range(1, n + 1):
        row_to_col[p[j] - 1] = j - 1
    return row_to_col, u[1:], v[1:]


def _lexicographic(tight: np.ndarray, row_to_col: np.ndarray) -> np.ndarray:
    """Lexicographically smallest perfect matching inside ``tight``."""
    n = tight.shape[0]
    match_row = row_to_col.copy()
    match_col = np.empty(n, dtype=int)
    match_col[match_row] = np.arange(n)
    fixed_col = np.zeros(n, dtype=bool)
    for i in range(n):
        for j in np.flatnonzero(tight[i] & ~fixed_col):
            if match_row[i] == j:
                break
            # free row k (loses j) must reach column t (freed by i) along alternating tight edges
            k, t = match_col[j], match_row[i]
            parent = {}
            queue = deque([k])
            seen_rows = {k}
            found = False
            while queue and not found:
                r = queue.popleft()
                for c in np.flatnonzero(tight[r] & ~fixed_col):
                    if c == j or c in parent:
                        continue
                    parent[c] = r
                    if c == t:
                        found = True
                        break
                    nxt = match_col[c]
                    if nxt != i and nxt not in seen_rows:
                        seen_rows.add(nxt)
                        queue.append(nxt)
            if not found:
                continue
            c = t
            while True:
                r = parent[c]
                prev = match_row[r]
                match_row[r], match_col[c] = c, r
                if r == k:
                    break
                c = prev
            match_row[i], match_col[j] = j, i
            break
        fixed_col[match_row[i]] = True
    return match_row


def hungarian(utilities, maximize: bool = True, rtol: float = 1e-10) -> np.ndarray:
    """Optimal assignment for a square matrix.

    Returns ``perm`` with ``perm[row] = column``. With ``maximize`` the total
    utility is maximized, otherwise minimized.
    """
    mat = np.asarray(utilities, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"assignment matrix must be square, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise ValueError("assignment matrix must be finite")
    n = mat.shape[0]
    if n == 0:
        return np.zeros(0, dtype=int)
    cost = -mat if maximize else mat
    cost = cost - cost.min()
    row_to_col, u, v = _solve_min(cost)
    reduced = cost - u[:, None] - v[None, :]
    tol = rtol * max(1.0, float(np.abs(cost).max())) * n
    return _lexicographic(reduced <= tol, row_to_col)


def assignment_value(utilities, perm) -> float:
    mat = np.asarray(utilities, dtype=float)
    return float(mat[np.arange(len(perm)), perm].sum())
