"""Independent reference computations used only by the tests.

None of these import the package's solvers: polyhedra come from raw
adjacency lists, ODEs are integrated by scipy, and mu is sampled densely.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.integrate import solve_ivp


def gap_matrix(n: int, edges) -> np.ndarray:
    """G with (G x)_i = mean of neighbor states minus x_i."""
    a = np.zeros((n, n))
    for i, j in edges:
        a[i - 1, j - 1] = a[j - 1, i - 1] = 1.0
    return a / a.sum(axis=1, keepdims=True) - np.eye(n)


def vertices(G: np.ndarray, lo: np.ndarray, hi: np.ndarray, pin: int = 0, tol: float = 1e-9) -> np.ndarray:
    """All vertices of {lo <= G x <= hi, x_pin = 0} by solving every active subsystem."""
    n = G.shape[0]
    rows = np.vstack([G, G])
    rhs = np.concatenate([lo, hi])
    e = np.zeros(n)
    e[pin] = 1.0
    found = []
    for active in itertools.combinations(range(2 * n), n - 1):
        A = np.vstack([rows[list(active)], e])
        if abs(np.linalg.det(A)) < 1e-10:
            continue
        x = np.linalg.solve(A, np.concatenate([rhs[list(active)], [0.0]]))
        g = G @ x
        if np.all(g >= lo - tol) and np.all(g <= hi + tol):
            found.append(x)
    return np.array(found)


def max_spread_by_vertices(G, lo, hi) -> float:
    v = vertices(G, lo, hi)
    return float(np.max(v.max(axis=1) - v.min(axis=1)))


def full_bounds(n: int, xi: float):
    return np.full(n, -2 * xi), np.full(n, 2 * xi)


def box_bounds(n: int, edges, d_minus: float, d_plus: float, xi: float):
    # uniform box entries: neighbor averages equal the entry value
    return np.full(n, -d_plus - xi), np.full(n, -d_minus + xi)


def grid_distance_chain3(x: np.ndarray, xi: float, res: int = 801) -> float:
    """Sup-norm distance from x to P(D, chain-3) by a grid over the pinned slice.

    For a slice point s the best translate s + c 1 is at distance
    spread(x - s) / 2, so only the two free coordinates need a grid.
    """
    G = gap_matrix(3, [(1, 2), (2, 3)])
    lo, hi = full_bounds(3, xi)
    v = vertices(G, lo, hi)
    box = (v[:, 1].min(), v[:, 1].max(), v[:, 2].min(), v[:, 2].max())
    best = math.inf
    for _ in range(3):
        y2, y3 = np.meshgrid(np.linspace(box[0], box[1], res), np.linspace(box[2], box[3], res))
        pts = np.stack([np.zeros(y2.size), y2.ravel(), y3.ravel()], axis=1)
        g = pts @ G.T
        ok = np.all((g >= lo - 1e-12) & (g <= hi + 1e-12), axis=1)
        diff = x[None, :] - pts[ok]
        d = (diff.max(axis=1) - diff.min(axis=1)) / 2
        k = int(np.argmin(d))
        best = min(best, float(d[k]))
        c = pts[ok][k]
        w2 = (box[1] - box[0]) / res * 4
        w3 = (box[3] - box[2]) / res * 4
        box = (c[1] - w2, c[1] + w2, c[2] - w3, c[2] + w3)
    return best


def ramp_crossing(f, a: float, b: float, tol: float = 1e-13) -> float:
    """Bisection for the root of an increasing function on [a, b]."""
    fa = f(a)
    while b - a > tol:
        m = 0.5 * (a + b)
        if (f(m) >= 0) == (fa >= 0):
            a, fa = m, f(m)
        else:
            b = m
    return 0.5 * (a + b)


def mu_sampled(evaluate, inside, t1: float, t2: float, dt: float) -> float:
    """Longest run of consecutive grid times where the realization is inside."""
    ts = np.arange(t1, t2 + dt / 2, dt)
    best = run = 0
    start = None
    for t in ts:
        if inside(evaluate(t)):
            if start is None:
                start = t
            run = t - start
            best = max(best, run)
        else:
            start = None
    return best


def h_system(xa0: float, xb0: float, xi: float, t_eval: np.ndarray):
    """Two agents with both measurements offset by +xi, lazy rule, adaptive DOP853."""
    def rhs(_, x):
        out = np.empty(2)
        for i, j in ((0, 1), (1, 0)):
            e = x[i] - (x[j] + xi)
            out[i] = -math.copysign(max(abs(e) - xi, 0.0), e)
        return out

    sol = solve_ivp(rhs, (0.0, float(t_eval[-1])), [xa0, xb0], method="DOP853", t_eval=t_eval,
                    rtol=1e-12, atol=1e-12, max_step=0.01)
    return sol.y[0], sol.y[1]


def lazy_field_bruteforce(x, d, adjacency, xi):
    """Control by explicitly minimizing |sum_j (y~_j - x_i)| over the measurement intervals."""
    n = len(x)
    u = np.zeros(n)
    for i in range(n):
        nb = np.flatnonzero(adjacency[i])
        lo = sum(x[j] + d[i, j] - xi - x[i] for j in nb)
        hi = sum(x[j] + d[i, j] + xi - x[i] for j in nb)
        u[i] = 0.0 if lo <= 0 <= hi else (lo if lo > 0 else hi)
    return u
