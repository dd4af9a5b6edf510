"""Dense two-phase tableau simplex with Bland's anti-cycling rule.

Solves  min c.x  s.t.  A x <= b,  lower <= x <= upper  with finite bounds,
which is the only LP shape the verifier needs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = 1e-9


class LPError(RuntimeError):
    pass


class LPBudgetExceeded(LPError):
    pass


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible"
    x: np.ndarray | None
    fun: float | None
    pivots: int


def _pivot(T: np.ndarray, r: int, col: int) -> None:
    T[r] /= T[r, col]
    factors = T[:, col].copy()
    factors[r] = 0.0
    T -= np.outer(factors, T[r])


def _run(T, basis, ncols, budget, pivots):
    """Iterate on tableau ``T`` whose last row holds reduced costs.

    Only the first ``ncols`` columns may enter. Returns the pivot count.
    """
    m = T.shape[0] - 1
    while True:
        rc = T[-1, :ncols]
        cand = np.flatnonzero(rc < -EPS)
        if cand.size == 0:
            return pivots
        col = int(cand[0])  # Bland: lowest index entering
        colv = T[:m, col]
        pos = colv > EPS
        if not pos.any():
            raise LPError("LP unbounded despite finite variable bounds")
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / colv[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + EPS * max(1.0, abs(best)))
        r = int(min(ties, key=lambda i: basis[i]))  # Bland: lowest index leaving
        if pivots >= budget:
            raise LPBudgetExceeded(f"simplex exceeded {budget} pivots")
        _pivot(T, r, col)
        basis[r] = col
        pivots += 1


def solve_lp(c, A, b, lower, upper, max_pivots: int = 50_000) -> LPResult:
    c = np.asarray(c, dtype=np.float64)
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    n = c.shape[0]
    A = np.asarray(A, dtype=np.float64).reshape(-1, n)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if np.any(upper < lower):
        return LPResult("infeasible", None, None, 0)

    # shift to y = x - lower >= 0 and append the upper-bound rows
    width = upper - lower
    rows = np.vstack([A, np.eye(n)])
    rhs = np.concatenate([b - A @ lower, width])
    m = rows.shape[0]

    neg = rhs < 0
    k = int(neg.sum())
    ncols = n + m + k
    T = np.zeros((m + 1, ncols + 1))
    T[:m, :n] = rows
    T[:m, n : n + m] = np.eye(m)
    T[:m, -1] = rhs
    T[:m][neg] *= -1.0
    basis = list(range(n, n + m))
    art = 0
    for i in np.flatnonzero(neg):
        T[i, n + m + art] = 1.0
        basis[i] = n + m + art
        art += 1

    pivots = 0
    if k:
        # phase I: minimise the sum of artificials
        T[-1, n + m :ncols] = 1.0
        for i in np.flatnonzero(neg):
            T[-1] -= T[i]
        pivots = _run(T, basis, ncols, max_pivots, pivots)
        if -T[-1, -1] > EPS * max(1.0, np.abs(rhs).max()):
            return LPResult("infeasible", None, None, pivots)
        # drive degenerate artificials out of the basis
        keep = []
        for i in range(m):
            if basis[i] >= n + m:
                nz = np.flatnonzero(np.abs(T[i, : n + m]) > EPS)
                if nz.size == 0:
                    continue  # redundant row
                _pivot(T, i, int(nz[0]))
                basis[i] = int(nz[0])
                pivots += 1
            keep.append(i)
        T = np.vstack([T[keep][:, list(range(n + m)) + [ncols]], np.zeros((1, n + m + 1))])
        basis = [basis[i] for i in keep]

    # phase II objective row
    cost = np.zeros(T.shape[1] - 1)
    cost[:n] = c
    T[-1, :-1] = cost
    T[-1, -1] = 0.0
    for i, j in enumerate(basis):
        if cost[j] != 0.0:
            T[-1] -= cost[j] * T[i]
    pivots = _run(T, basis, T.shape[1] - 1, max_pivots, pivots)

    y = np.zeros(T.shape[1] - 1)
    for i, j in enumerate(basis):
        y[j] = T[i, -1]
    x = np.clip(lower + y[:n], lower, upper)
    scale = 1.0 + np.abs(b).max(initial=0.0) + np.abs(A).max(initial=0.0) * np.abs(x).max(initial=0.0)
    if A.shape[0] and np.max(A @ x - b) > 1e-7 * scale:
        raise LPError("simplex returned an infeasible point (numerical failure)")
    return LPResult("optimal", x, float(c @ x), pivots)
