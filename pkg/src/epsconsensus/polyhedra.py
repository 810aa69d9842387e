"""Equilibrium polyhedra of the lazy protocol and extremal spreads over them.

For edgeset E and agent i write g_i(x) = mean_{j in N_i} x_j - x_i. All
polyhedra handled here have the form lo_i <= g_i(x) <= hi_i, with the
bounds depending on what is known about the disturbance:

* a constant d:        lo_i = -mean_j d_ij - xi,   hi_i = -mean_j d_ij + xi
* a box [d-, d+]:      lo_i = -mean_j d+_ij - xi,  hi_i = -mean_j d-_ij + xi
* the whole cube D:    lo_i = -2 xi,               hi_i = 2 xi

Every such set contains the consensus line {pi * 1} and is invariant
along it, so extremal problems pin one coordinate to zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .disturbance import Box
from .lp import Constraint, LinearProgram, solve_lp
from .topology import Topology


class PolyhedronError(RuntimeError):
    pass


@dataclass(frozen=True)
class PolyhedronSpec:
    """Which equilibrium polyhedron: kind is "constant", "box" or "full"."""

    kind: str
    topology: Topology
    edgeset: int
    xi: float
    d: Optional[np.ndarray] = None
    box: Optional[Box] = None

    def __post_init__(self):
        if self.kind not in ("constant", "box", "full"):
            raise ValueError(f"unknown polyhedron kind {self.kind!r}")
        if not self.xi > 0:
            raise ValueError("xi must be positive")
        self.topology.adjacency(self.edgeset)
        n = self.topology.n
        if self.kind == "constant":
            if self.d is None:
                raise ValueError("constant kind needs a disturbance matrix")
            d = np.asarray(self.d, dtype=float)
            if d.shape != (n, n):
                raise ValueError(f"disturbance matrix must be {n}x{n}")
            off = ~np.eye(n, dtype=bool)
            if np.any(np.abs(d[off]) > self.xi * (1 + 1e-12)):
                raise ValueError("disturbance matrix exceeds xi")
            object.__setattr__(self, "d", d)
        if self.kind == "box":
            if self.box is None:
                raise ValueError("box kind needs a Box")
            if self.box.n != n or abs(self.box.xi - self.xi) > 1e-15 * self.xi:
                raise ValueError("box does not match topology or xi")

    @classmethod
    def full(cls, topology: Topology, edgeset: int, xi: float) -> PolyhedronSpec:
        return cls("full", topology, edgeset, xi)

    @classmethod
    def constant(cls, topology: Topology, edgeset: int, xi: float, d) -> PolyhedronSpec:
        return cls("constant", topology, edgeset, xi, d=np.asarray(d, dtype=float))

    @classmethod
    def from_box(cls, topology: Topology, edgeset: int, box: Box) -> PolyhedronSpec:
        return cls("box", topology, edgeset, box.xi, box=box)

    def rows(self) -> np.ndarray:
        """Matrix G with G @ x = g(x), the neighborhood-average gaps."""
        a = self.topology.adjacency(self.edgeset)
        return a / a.sum(axis=1, keepdims=True) - np.eye(self.topology.n)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        a = self.topology.adjacency(self.edgeset)
        deg = a.sum(axis=1)
        n, xi = self.topology.n, self.xi
        if self.kind == "full":
            return np.full(n, -2 * xi), np.full(n, 2 * xi)
        if self.kind == "constant":
            m = (a * self.d).sum(axis=1) / deg
            return -m - xi, -m + xi
        m_plus = (a * self.box.d_plus).sum(axis=1) / deg
        m_minus = (a * self.box.d_minus).sum(axis=1) / deg
        return -m_plus - xi, -m_minus + xi


@dataclass
class Membership:
    inside: bool
    gaps: np.ndarray
    lower_slack: np.ndarray
    upper_slack: np.ndarray

    def __bool__(self) -> bool:
        return self.inside

    @property
    def slack(self) -> np.ndarray:
        """Per-agent margin to the nearer bound (negative when violated)."""
        return np.minimum(self.lower_slack, self.upper_slack)


def default_tol(x) -> float:
    return 1e-9 * max(1.0, float(np.max(np.abs(x))))


def membership(spec: PolyhedronSpec, x, tol: Optional[float] = None) -> Membership:
    x = np.asarray(x, dtype=float)
    if tol is None:
        tol = default_tol(x)
    if tol < 0:
        raise ValueError("tolerance must be non-negative")
    g = spec.rows() @ x
    lo, hi = spec.bounds()
    ls, us = g - lo, hi - g
    return Membership(bool(np.all(ls >= -tol) and np.all(us >= -tol)), g, ls, us)


def intersection_membership(specs: Sequence[PolyhedronSpec], x, tol: Optional[float] = None) -> bool:
    if not specs:
        raise ValueError("need at least one polyhedron")
    return all(membership(s, x, tol).inside for s in specs)


def witness_disturbance(x, box: Box, topology: Topology, edgeset: int) -> np.ndarray:
    """A constant disturbance in ``box`` that makes ``x`` an equilibrium.

    Agents whose neighborhood-average gap is non-negative read every
    neighbor with the box's lower corner, the others with the upper
    corner; non-neighbor entries take the upper corner.
    """
    x = np.asarray(x, dtype=float)
    spec = PolyhedronSpec.from_box(topology, edgeset, box)
    if not membership(spec, x):
        raise ValueError("point is outside the box equilibrium polyhedron")
    a = topology.adjacency(edgeset).astype(bool)
    g = spec.rows() @ x
    d = box.d_plus.copy()
    low_rows = g >= 0
    pick = a & low_rows[:, None]
    d[pick] = box.d_minus[pick]
    np.fill_diagonal(d, 0.0)
    check = PolyhedronSpec.constant(topology, edgeset, box.xi, d)
    if not (box.contains(d) and membership(check, x)):
        raise PolyhedronError("witness disturbance failed its own check")
    return d


def _pinned_program(spec: PolyhedronSpec, objective: np.ndarray, pin: int) -> LinearProgram:
    G = spec.rows()
    lo, hi = spec.bounds()
    cons = [Constraint(G[i], float(lo[i]), float(hi[i])) for i in range(spec.topology.n)]
    e = np.zeros(spec.topology.n)
    e[pin - 1] = 1.0
    cons.append(Constraint(e, 0.0, 0.0))
    return LinearProgram(objective, cons)


def pairwise_maxima(spec: PolyhedronSpec, pin: int = 1) -> dict[tuple[int, int], float]:
    """max of x_i - x_j over the polyhedron for every ordered pair (i, j), i != j."""
    n = spec.topology.n
    if not 1 <= pin <= n:
        raise IndexError(f"pin agent {pin} out of range")
    out = {}
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            if i == j:
                continue
            c = np.zeros(n)
            c[i - 1], c[j - 1] = 1.0, -1.0
            res = solve_lp(_pinned_program(spec, c, pin))
            if res.status == "unbounded":
                raise PolyhedronError(
                    f"max x_{i} - x_{j} unbounded: edgeset {spec.edgeset} is probably disconnected")
            if res.status == "infeasible":
                raise PolyhedronError("equilibrium polyhedron is empty")
            out[(i, j)] = res.value
    return out


def epsilon_bar(topology: Topology, edgeset: int, xi: float, pin: int = 1) -> float:
    """Largest pairwise difference x_i - x_j over P(D, E) (a spread, not a radius)."""
    return max(pairwise_maxima(PolyhedronSpec.full(topology, edgeset, xi), pin).values())


def tube_radius_L(spec: PolyhedronSpec, pin: int = 1) -> float:
    """Largest spread max(x) - min(x) over the polyhedron."""
    return max(pairwise_maxima(spec, pin).values())


def in_tube(x, L: float, nu: float) -> bool:
    """Membership in the tube of states whose spread is at most L + 2 nu."""
    x = np.asarray(x, dtype=float)
    return float(x.max() - x.min()) <= L + 2 * nu


def _distance_program(spec: PolyhedronSpec, x: np.ndarray, nu: Optional[float]) -> LinearProgram:
    """Variables (y, r): y in the polyhedron, |x - y|_inf <= r (r fixed to nu if given)."""
    n = spec.topology.n
    G = spec.rows()
    lo, hi = spec.bounds()
    cons = [Constraint(np.concatenate([G[i], [0.0]]), float(lo[i]), float(hi[i])) for i in range(n)]
    for i in range(n):
        up = np.zeros(n + 1)
        up[i], up[n] = 1.0, 1.0
        dn = np.zeros(n + 1)
        dn[i], dn[n] = 1.0, -1.0
        cons.append(Constraint(up, float(x[i]), None))   # y_i + r >= x_i
        cons.append(Constraint(dn, None, float(x[i])))   # y_i - r <= x_i
    e = np.zeros(n + 1)
    e[n] = 1.0
    cons.append(Constraint(e, 0.0, None) if nu is None else Constraint(e, nu, nu))
    c = np.zeros(n + 1)
    c[n] = -1.0
    return LinearProgram(c, cons)


def distance_to_polyhedron(spec: PolyhedronSpec, x, method: str = "lp", tol: float = 1e-10) -> float:
    """Least nu >= 0 with ``x`` in the polyhedron dilated by nu in the sup norm.

    ``method="lp"`` minimizes nu in one program; ``method="bisection"``
    bisects on nu with a feasibility program per step and stops once the
    bracket is narrower than ``tol``.
    """
    x = np.asarray(x, dtype=float)
    if membership(spec, x, tol=0.0):
        return 0.0
    if method == "lp":
        res = solve_lp(_distance_program(spec, x, None))
        if not res.optimal:
            raise PolyhedronError(f"distance program ended {res.status}")
        return max(0.0, -res.value)
    if method != "bisection":
        raise ValueError(f"unknown method {method!r}")
    lo, hi = 0.0, max(1.0, float(x.max() - x.min()))
    while solve_lp(_distance_program(spec, x, hi)).status != "optimal":
        hi *= 2
    steps = int(math.ceil(math.log2(max(hi / tol, 2.0))))
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if solve_lp(_distance_program(spec, x, mid)).status == "optimal":
            hi = mid
        else:
            lo = mid
    return hi


def distance_lower_bound(spec: PolyhedronSpec, x) -> float:
    """Cheap lower bound on the sup-norm distance: each gap moves by at most 2 nu."""
    m = membership(spec, x, tol=0.0)
    worst = float(np.max(-np.minimum(m.lower_slack, m.upper_slack)))
    return max(0.0, worst / 2.0)
