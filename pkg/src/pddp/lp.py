"""Small exact dense simplex solver (two-phase, Bland's rule).

Solves ``max c^T x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  x >= 0`` and
returns primal values, row duals from the final basis and a status.  Meant for
problems with a few dozen variables where determinism matters more than speed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL, INFEASIBLE, UNBOUNDED = "optimal", "infeasible", "unbounded"

PIVOT_TOL = 1e-11
FEAS_TOL = 1e-9


class LPError(RuntimeError):
    """Numerical failure of the simplex routine."""


@dataclass(frozen=True, eq=False)
class LPResult:
    status: str
    x: np.ndarray
    value: float
    y_eq: np.ndarray
    y_ub: np.ndarray
    iterations: int

    def certificate(self, c, A_eq, b_eq, A_ub, b_ub) -> dict[str, float]:
        """Primal/dual feasibility and complementary slackness residuals."""
        c, A_eq, b_eq, A_ub, b_ub = _coerce(c, A_eq, b_eq, A_ub, b_ub)
        x = self.x
        reduced = A_eq.T @ self.y_eq + A_ub.T @ self.y_ub - c  # must be >= 0
        slack = b_ub - A_ub @ x  # must be >= 0
        return {
            "primal_eq": float(np.max(np.abs(A_eq @ x - b_eq), initial=0.0)),
            "primal_ub": float(max(0.0, -np.min(slack, initial=0.0))),
            "primal_sign": float(max(0.0, -np.min(x, initial=0.0))),
            "dual_sign": float(max(0.0, -np.min(self.y_ub, initial=0.0))),
            "dual_reduced": float(max(0.0, -np.min(reduced, initial=0.0))),
            "slack_x": float(np.max(np.abs(x * reduced), initial=0.0)),
            "slack_ub": float(np.max(np.abs(self.y_ub * slack), initial=0.0)),
        }


def _coerce(c, A_eq, b_eq, A_ub, b_ub):
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).reshape(-1)
    if A_eq.shape != (b_eq.shape[0], n) or A_ub.shape != (b_ub.shape[0], n):
        raise ValueError("constraint shapes do not match the objective")
    return c, A_eq, b_eq, A_ub, b_ub


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    for i in range(T.shape[0]):
        if i != row and T[i, col] != 0.0:
            T[i] -= T[i, col] * T[row]


def _run(T: np.ndarray, basis: list[int], allowed: np.ndarray, max_iter: int) -> tuple[str, int]:
    """Minimize the objective row ``T[-1]`` (reduced costs) over ``allowed`` columns."""
    m = T.shape[0] - 1
    for it in range(max_iter):
        entering = -1
        for j in np.flatnonzero(allowed):  # Bland: lowest index with negative reduced cost
            if T[-1, j] < -PIVOT_TOL:
                entering = int(j)
                break
        if entering < 0:
            return OPTIMAL, it
        col = T[:m, entering]
        best, leaving = np.inf, -1
        for i in range(m):
            if col[i] > PIVOT_TOL:
                ratio = T[i, -1] / col[i]
                # ties go to the lowest basic index (Bland)
                if ratio < best - 1e-14 or (abs(ratio - best) <= 1e-14 and basis[i] < basis[leaving]):
                    best, leaving = ratio, i
        if leaving < 0:
            return UNBOUNDED, it
        _pivot(T, leaving, entering)
        basis[leaving] = entering
    raise LPError(f"simplex did not terminate within {max_iter} pivots")


def solve(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None, max_iter: int = 10_000) -> LPResult:
    c, A_eq, b_eq, A_ub, b_ub = _coerce(c, A_eq, b_eq, A_ub, b_ub)
    n = c.shape[0]
    m_eq, m_ub = A_eq.shape[0], A_ub.shape[0]
    m = m_eq + m_ub
    # standard form: [A_eq 0; A_ub I] [x; s] = b, rows flipped so b >= 0
    A = np.zeros((m, n + m_ub))
    A[:m_eq, :n] = A_eq
    A[m_eq:, :n] = A_ub
    A[m_eq:, n:] = np.eye(m_ub)
    b = np.concatenate([b_eq, b_ub])
    sign = np.where(b < 0, -1.0, 1.0)
    A *= sign[:, None]
    b = b * sign
    n_std = n + m_ub

    # phase 1 with one artificial per row
    T = np.zeros((m + 1, n_std + m + 1))
    T[:m, :n_std] = A
    T[:m, n_std:n_std + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n_std] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(n_std, n_std + m))
    allowed = np.ones(n_std + m, dtype=bool)
    _, it1 = _run(T, basis, allowed, max_iter)
    empty = np.zeros(0)
    if -T[-1, -1] > FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
        return LPResult(INFEASIBLE, np.full(n, np.nan), np.nan, np.full(m_eq, np.nan),
                        np.full(m_ub, np.nan), it1)

    # drive zero-level artificials out of the basis; rows where that fails are redundant
    keep = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] >= n_std:
            cand = [j for j in range(n_std) if abs(T[i, j]) > 1e-9]
            if cand:
                _pivot(T, i, cand[0])
                basis[i] = cand[0]
            else:
                keep[i] = False

    # phase 2 over the original columns
    rows = np.flatnonzero(keep)
    T2 = np.zeros((rows.size + 1, n_std + 1))
    T2[:-1, :n_std] = T[rows, :n_std]
    T2[:-1, -1] = T[rows, -1]
    basis2 = [basis[i] for i in rows]
    cost = np.zeros(n_std)
    cost[:n] = -c  # minimize -c^T x
    T2[-1, :n_std] = cost
    for i, j in enumerate(basis2):
        T2[-1] -= cost[j] * T2[i]
    status, it2 = _run(T2, basis2, np.ones(n_std, dtype=bool), max_iter)
    if status == UNBOUNDED:
        return LPResult(UNBOUNDED, np.full(n, np.nan), np.inf, np.full(m_eq, np.nan),
                        np.full(m_ub, np.nan), it1 + it2)
    z = np.zeros(n_std)
    for i, j in enumerate(basis2):
        z[j] = T2[i, -1]
    x = np.maximum(z[:n], 0.0)

    # duals of the kept (sign-flipped) rows from B^T y = c_B, then unflip
    B = A[rows][:, basis2]
    c_std = np.zeros(n_std)
    c_std[:n] = c
    try:
        y_kept = np.linalg.solve(B.T, c_std[basis2])
    except np.linalg.LinAlgError as exc:
        raise LPError("singular final basis") from exc
    y = np.zeros(m)
    y[rows] = y_kept
    y *= sign
    return LPResult(OPTIMAL, x, float(c @ x), y[:m_eq], y[m_eq:], it1 + it2)
