"""Small dense two-phase simplex solver with Bland's anti-cycling rule.

Problems are stated over free variables as

    maximize  c @ x   subject to   lower_k <= a_k @ x <= upper_k

with either bound allowed to be ``None``. Every optimal answer is
re-checked by substitution before it is returned.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

PIVOT_TOL = 1e-11
FEAS_TOL = 1e-9


class LPError(RuntimeError):
    """Solver produced a certificate that fails re-verification."""


@dataclass
class Constraint:
    a: np.ndarray
    lower: Optional[float] = None
    upper: Optional[float] = None


@dataclass
class LinearProgram:
    objective: np.ndarray
    constraints: list[Constraint] = field(default_factory=list)

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).reshape(-1)
        n = self.objective.size
        if not self.constraints:
            raise ValueError("linear program needs at least one constraint")
        for c in self.constraints:
            c.a = np.asarray(c.a, dtype=float).reshape(-1)
            if c.a.size != n:
                raise ValueError("constraint width does not match objective")
            for b in (c.lower, c.upper):
                if b is not None and not np.isfinite(b):
                    raise ValueError("constraint bounds must be finite or None")

    @classmethod
    def from_rows(cls, objective, rows, lower: Sequence, upper: Sequence) -> LinearProgram:
        cons = [Constraint(np.asarray(r, dtype=float), lo, hi) for r, lo, hi in zip(rows, lower, upper)]
        return cls(objective, cons)


@dataclass
class LPResult:
    status: str  # "optimal" | "unbounded" | "infeasible"
    value: Optional[float] = None
    x: Optional[np.ndarray] = None
    pivots: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _standard_form(lp: LinearProgram):
    """Rewrite as A z = b, z >= 0, with x = z[:n] - z[n:2n] and slacks after."""
    n = lp.objective.size
    rows: list[tuple[np.ndarray, float, int]] = []  # (a, rhs, slack sign)
    for c in lp.constraints:
        if c.lower is not None and c.upper is not None and c.lower == c.upper:
            rows.append((c.a, c.lower, 0))
            continue
        if c.upper is not None:
            rows.append((c.a, c.upper, 1))
        if c.lower is not None:
            rows.append((c.a, c.lower, -1))
    m = len(rows)
    n_slack = sum(1 for _, _, s in rows if s != 0)
    A = np.zeros((m, 2 * n + n_slack))
    b = np.zeros(m)
    col = 2 * n
    for r, (a, rhs, s) in enumerate(rows):
        A[r, :n] = a
        A[r, n:2 * n] = -a
        if s != 0:
            A[r, col] = s
            col += 1
        b[r] = rhs
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    return A, b


def _pivot(T: np.ndarray, basis: list[int], r: int, c: int) -> None:
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])
    basis[r] = c


def _run(T: np.ndarray, basis: list[int], allowed: int, max_iter: int) -> tuple[str, int]:
    """Minimize the objective held in the last row of T (reduced costs) with Bland's rule."""
    m = T.shape[0] - 1
    it = 0
    while it < max_iter:
        cost = T[-1, :allowed]
        scale = max(1.0, float(np.max(np.abs(cost))))
        enter = np.flatnonzero(cost < -PIVOT_TOL * scale)
        if enter.size == 0:
            return "optimal", it
        c = int(enter[0])
        colv = T[:m, c]
        pos = np.flatnonzero(colv > PIVOT_TOL)
        if pos.size == 0:
            return "unbounded", it
        ratios = np.maximum(T[pos, -1], 0.0) / colv[pos]
        best = ratios.min()
        ties = pos[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
        r = int(min(ties, key=lambda q: basis[q]))
        _pivot(T, basis, r, c)
        it += 1
    raise LPError("simplex iteration limit reached")


def solve_lp(lp: LinearProgram, max_iter: int = 10000) -> LPResult:
    n = lp.objective.size
    A, b = _standard_form(lp)
    m, N = A.shape
    # phase 1 tableau: [A | I | b] with artificial costs
    T = np.zeros((m + 1, N + m + 1))
    T[:m, :N] = A
    T[:m, N:N + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :N] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(N, N + m))
    _, it1 = _run(T, basis, N, max_iter)
    scale = max(1.0, float(np.max(np.abs(b))) if m else 1.0)
    # stricter than the verification tolerance, so boundary cases come out infeasible
    if -T[-1, -1] > 0.1 * FEAS_TOL * scale:
        return LPResult("infeasible", pivots=it1)

    # drive remaining artificials out of the basis; drop redundant rows
    keep = []
    for r in range(m):
        if basis[r] >= N:
            cand = np.flatnonzero(np.abs(T[r, :N]) > 1e-9)
            if cand.size:
                _pivot(T, basis, r, int(cand[0]))
                keep.append(r)
        else:
            keep.append(r)
    T = np.vstack([T[keep][:, list(range(N)) + [T.shape[1] - 1]], np.zeros((1, N + 1))])
    basis = [basis[r] for r in keep]

    # phase 2: minimize -c over z
    cz = np.concatenate([-lp.objective, lp.objective, np.zeros(N - 2 * n)])
    T[-1, :N] = cz
    T[-1, -1] = 0.0
    for r, j in enumerate(basis):
        if T[-1, j] != 0.0:
            T[-1] -= T[-1, j] * T[r]
    status, it2 = _run(T, basis, N, max_iter)
    if status == "unbounded":
        return LPResult("unbounded", pivots=it1 + it2)
    z = np.zeros(N)
    for r, j in enumerate(basis):
        z[j] = T[r, -1]
    x = z[:n] - z[n:2 * n]
    value = float(lp.objective @ x)
    _verify(lp, x, value, T[-1, -1])
    return LPResult("optimal", value, x, it1 + it2)


def _verify(lp: LinearProgram, x: np.ndarray, value: float, tableau_value: float) -> None:
    scale = max(1.0, float(np.max(np.abs(x))))
    for k, c in enumerate(lp.constraints):
        ax = float(c.a @ x)
        tol = FEAS_TOL * max(scale, float(np.max(np.abs(c.a))) * scale)
        if c.lower is not None and ax < c.lower - tol:
            raise LPError(f"constraint {k}: {ax} < lower {c.lower}")
        if c.upper is not None and ax > c.upper + tol:
            raise LPError(f"constraint {k}: {ax} > upper {c.upper}")
    if abs(value - tableau_value) > FEAS_TOL * max(1.0, abs(value)) * 10:
        raise LPError(f"objective mismatch: {value} vs tableau {tableau_value}")
