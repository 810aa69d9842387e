"""Trajectory diagnostics and empirical checks of the convergence results.

Radius convention: the tube {x : |x_i - x_j| <= 2 eps} has radius eps,
so a spread s corresponds to eps = s / 2. Reports carry both numbers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from . import disturbance as dist
from .polyhedra import (PolyhedronSpec, distance_to_polyhedron, membership,
                        tube_radius_L)
from .simulator import (Scenario, Trajectory, edge_energy, integrate,
                        two_agent_limit)
from .topology import SwitchingSignal, Topology


def lyapunov(x, topology: Topology, k: int) -> float:
    """Half the sum of squared state differences over the undirected edges of ``k``."""
    return float(edge_energy(np.asarray(x, dtype=float), topology, k))


def spread(x) -> float:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("empty state")
    return float(x.max() - x.min())


# -- envelope bounds ------------------------------------------------------------

@dataclass
class EnvelopeBounds:
    alpha: float
    beta: float
    alpha_printed: float

    @property
    def alpha_discrepancy(self) -> float:
        """How far the alternative lower-bound formula sits from the validated one."""
        return self.alpha_printed - self.alpha


def envelope_bounds(x0, xi: float) -> EnvelopeBounds:
    """Bounds on the limits of all states, from the two extreme pairs of ``x0``.

    The upper bound follows the top two components through the two-agent
    system with disturbance +xi; the lower bound is its mirror image. The
    alternative lower-bound formula with ``+xi`` inside the logarithm is
    reported alongside as ``alpha_printed``.
    """
    x = np.sort(np.asarray(x0, dtype=float))
    if x.size < 2:
        raise ValueError("need at least two agents")
    if not xi > 0:
        raise ValueError("xi must be positive")
    top, second = x[-1], x[-2]
    low, low2 = x[0], x[1]
    beta = top
    if top - second > 2 * xi:
        beta = min(top, 0.5 * (top + second) + xi + 0.5 * xi * math.log((top - second - xi) / xi))
    alpha = low
    alpha_printed = low
    gap = low2 - low
    if gap > 2 * xi:
        alpha = max(low, 0.5 * (low + low2) - xi - 0.5 * xi * math.log((gap - xi) / xi))
        alpha_printed = max(low, 0.5 * (low + low2) - xi - 0.5 * xi * math.log((gap + xi) / xi))
    # both must agree with the two-agent limits (the lower one by reflection)
    if not (math.isclose(beta, two_agent_limit(top, second, xi), rel_tol=1e-12, abs_tol=1e-12)
            and math.isclose(alpha, -two_agent_limit(-low, -low2, xi), rel_tol=1e-12, abs_tol=1e-12)):
        raise RuntimeError("envelope bounds disagree with the two-agent limits")
    return EnvelopeBounds(alpha, beta, alpha_printed)


# -- consensus detection --------------------------------------------------------

@dataclass
class ConsensusReport:
    achieved: bool
    epsilon: float
    entry_time: Optional[float]
    final_spread: float
    in_pde: bool
    in_pde_by_edgeset: dict[int, bool] = field(default_factory=dict)

    def lines(self) -> list[str]:
        return [
            f"epsilon={self.epsilon:.17g}",
            f"epsilon_spread={2 * self.epsilon:.17g}",
            f"achieved={str(self.achieved).lower()}",
            f"entry_time={'none' if self.entry_time is None else f'{self.entry_time:.17g}'}",
            f"final_spread={self.final_spread:.17g}",
            f"final_radius={self.final_spread / 2:.17g}",
            f"in_PDE={str(self.in_pde).lower()}",
        ] + [f"in_PDE_E{k}={str(v).lower()}" for k, v in sorted(self.in_pde_by_edgeset.items())]


def _entry_index(values: np.ndarray, bound: float) -> Optional[int]:
    """First index from which ``values`` stays at or below ``bound``."""
    bad = np.flatnonzero(values > bound)
    if bad.size == 0:
        return 0
    k = int(bad[-1]) + 1
    return k if k < values.size else None


def consensus_report(traj: Trajectory, epsilon: float, topology: Topology, xi: float,
                     edgesets: Optional[Sequence[int]] = None) -> ConsensusReport:
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    k = _entry_index(traj.spread, 2 * epsilon)
    if edgesets is None:
        edgesets = range(1, topology.num_edgesets + 1)
    final = traj.final
    flags = {e: membership(PolyhedronSpec.full(topology, e, xi), final).inside for e in edgesets}
    return ConsensusReport(
        achieved=k is not None,
        epsilon=float(epsilon),
        entry_time=None if k is None else float(traj.t[k]),
        final_spread=float(traj.spread[-1]),
        in_pde=all(flags.values()),
        in_pde_by_edgeset=flags,
    )


# -- Lyapunov / spread relation -------------------------------------------------

@dataclass
class ImplicationCheck:
    premise: bool
    conclusion: bool

    @property
    def holds(self) -> bool:
        return (not self.premise) or self.conclusion


def v_spread_bounds(x, topology: Topology, k: int) -> tuple[float, float, float]:
    """(lower, V(x), upper) with lower = s^2 / (2(n-1)) and upper = n^2 s^2 / 8."""
    n = topology.n
    s = spread(x)
    return s * s / (2 * (n - 1)), lyapunov(x, topology, k), n * n * s * s / 8


def v_spread_inequality_check(x_hat, x_bar, gamma: float, topology: Topology, k: int) -> ImplicationCheck:
    """If V(x_bar) <= 4 gamma^2 V(x_hat) / (n^2 (n-1)) then spread(x_bar) <= gamma spread(x_hat)."""
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    n = topology.n
    premise = lyapunov(x_bar, topology, k) <= 4 * gamma ** 2 * lyapunov(x_hat, topology, k) / (n * n * (n - 1))
    conclusion = spread(x_bar) <= gamma * spread(x_hat)
    return ImplicationCheck(bool(premise), bool(conclusion))


# -- contraction time -----------------------------------------------------------

@dataclass
class QEstimate:
    q: float
    samples: int
    unresolved: int
    per_sample: list[float]
    lower_bound: bool = True


def _first_hit(traj: Trajectory, spec: PolyhedronSpec, nu: float, gamma: float, stride: int = 8) -> float:
    """First sample time where the spread fell below gamma times its start or
    the state came within nu of the polyhedron.

    Distances are only computed where the cheap lower bound allows a hit,
    probing every ``stride``-th candidate and then backtracking.
    """
    hits = np.flatnonzero(traj.spread < gamma * traj.spread[0])
    limit = int(hits[0]) if hits.size else traj.t.size
    G = spec.rows()
    lo, hi = spec.bounds()
    g = traj.x[:limit] @ G.T
    lb = np.max(np.maximum(lo - g, g - hi), axis=1) / 2
    cand = np.flatnonzero(lb <= nu)

    def near(i: int) -> bool:
        return lb[i] <= 0 or distance_to_polyhedron(spec, traj.x[i]) <= nu

    if cand.size:
        probes = list(range(0, cand.size, stride))
        if probes[-1] != cand.size - 1:
            probes.append(cand.size - 1)
        last_miss = -1
        for p in probes:
            if near(int(cand[p])):
                first = next(int(i) for i in cand[last_miss + 1:p + 1] if near(int(i)))
                return float(traj.t[first])
            last_miss = p
    return float(traj.t[limit]) if limit < traj.t.size else math.inf


def estimate_q(topology: Topology, k: int, xi: float, nu: float, gamma: float, budget: int,
               seed: int = 0, *, spread_range: tuple[float, float] | None = None,
               t_max: float = 30.0, step: float = 1e-2, knot_spacing: float = 1.0,
               initial_states: Optional[Sequence] = None) -> QEstimate:
    """Empirical time after which the spread has shrunk by ``gamma`` or the
    state is within ``nu`` of the equilibrium polyhedron.

    Initial states are random with spread drawn log-uniformly from
    ``spread_range`` (default ``(xi, 50 xi)``); disturbances are seeded
    continuous random realizations. The result is the largest first-hit
    time seen, so it under-estimates the worst case over all states.
    """
    if budget <= 0:
        raise ValueError("sample budget must be positive")
    if not nu > 0 or not 0 < gamma < 1:
        raise ValueError("need nu > 0 and 0 < gamma < 1")
    rng = np.random.default_rng(seed)
    n = topology.n
    lo_s, hi_s = spread_range or (xi, 50 * xi)
    states = []
    if initial_states is not None:
        states = [np.asarray(s, dtype=float) for s in initial_states]
    while len(states) < budget:
        u = rng.uniform(size=n)
        s = math.exp(rng.uniform(math.log(lo_s), math.log(hi_s)))
        states.append(s * (u - u.min()) / max(u.max() - u.min(), 1e-300))
    spec = PolyhedronSpec.full(topology, k, xi)
    per = []
    for i, x0 in enumerate(states[:max(budget, len(states))]):
        real = dist.seeded_random(n, xi, int(rng.integers(2 ** 31)), t_max, knot_spacing)
        sc = Scenario(topology, SwitchingSignal.constant(k, t_max), real, x0, step=step, horizon=t_max)
        per.append(_first_hit(integrate(sc), spec, nu, gamma))
    unresolved = sum(1 for q in per if math.isinf(q))
    return QEstimate(max(per), len(per), unresolved, per)


def dwell_time(topology: Topology, xi: float, nu: float, gamma: float, budget: int,
               seed: int = 0, **kw) -> float:
    """Largest per-edgeset contraction-time estimate."""
    return max(estimate_q(topology, k, xi, nu, gamma, budget, seed + k, **kw).q
               for k in range(1, topology.num_edgesets + 1))


# -- switched tube --------------------------------------------------------------

@lru_cache(maxsize=256)
def full_tube_L(topology: Topology, k: int, xi: float) -> float:
    return tube_radius_L(PolyhedronSpec.full(topology, k, xi))


@dataclass
class TubeCheck:
    passed: bool
    threshold: float
    final_spread: float
    L: dict[int, float]
    margins: dict[int, float]
    entry_time: Optional[float]

    def lines(self) -> list[str]:
        out = [f"passed={str(self.passed).lower()}",
               f"threshold_spread={self.threshold:.17g}",
               f"final_spread={self.final_spread:.17g}",
               f"entry_time={'none' if self.entry_time is None else f'{self.entry_time:.17g}'}"]
        for k in sorted(self.L):
            out.append(f"L_E{k}={self.L[k]:.17g}")
            out.append(f"margin_E{k}={self.margins[k]:.17g}")
        return out


def switched_tube_check(traj: Trajectory, topology: Topology, xi: float, nu: float) -> TubeCheck:
    """Does the trajectory end inside every tube {spread <= L(D, E_k) + 2 nu}?"""
    if not nu > 0:
        raise ValueError("nu must be positive")
    L = {k: full_tube_L(topology, k, xi) for k in range(1, topology.num_edgesets + 1)}
    threshold = min(L.values()) + 2 * nu
    final = float(traj.spread[-1])
    margins = {k: v + 2 * nu - final for k, v in L.items()}
    idx = _entry_index(traj.spread, threshold)
    return TubeCheck(final <= threshold, threshold, final, L, margins,
                     None if idx is None else float(traj.t[idx]))
