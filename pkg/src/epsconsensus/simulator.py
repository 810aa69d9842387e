"""Fixed-step RK4 integration of the switched consensus system.

Steps are truncated so that every switching time is a sample point. The
state is continuous across switches; the control recorded at a switching
time uses the edgeset that becomes active there.
"""
from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import disturbance as dist
from .protocol import MODES, field as control_field
from .topology import SwitchingSignal, Topology, validate

log = logging.getLogger(__name__)

EQUILIBRIUM_U = 1e-9
EQUILIBRIUM_STEPS = 100


class ScenarioError(ValueError):
    pass


class IntegrationError(RuntimeError):
    def __init__(self, t: float, message: str = "state became non-finite"):
        super().__init__(f"{message} at t={t:.17g}")
        self.t = t


@dataclass(frozen=True)
class Scenario:
    topology: Topology
    signal: SwitchingSignal
    disturbance: dist.Disturbance
    x0: np.ndarray
    mode: str = "lazy"
    step: float = 1e-3
    horizon: float = 20.0
    stop_at_equilibrium: bool = False
    allow_complete: bool = False

    def __post_init__(self):
        x0 = np.array(self.x0, dtype=float).reshape(-1)
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)

    @property
    def xi(self) -> float:
        return self.disturbance.xi

    @property
    def n(self) -> int:
        return self.topology.n

    def check(self) -> None:
        """Raise :class:`ScenarioError` describing the first problem found."""
        topo = self.topology
        report = validate(topo)
        if not report.structurally_ok:
            raise ScenarioError("invalid topology: " + "; ".join(report.failures()))
        if not report.ok and not self.allow_complete:
            raise ScenarioError("invalid topology: " + "; ".join(report.failures())
                                + " (set allow_complete to simulate complete graphs)")
        if self.mode not in MODES:
            raise ScenarioError(f"unknown protocol mode {self.mode!r}")
        if self.x0.size != topo.n or not np.all(np.isfinite(self.x0)):
            raise ScenarioError(f"initial state must be {topo.n} finite numbers")
        if self.disturbance.n != topo.n:
            raise ScenarioError("disturbance size does not match agent count")
        if not (self.step > 0 and math.isfinite(self.step)):
            raise ScenarioError("step must be positive")
        if not (self.horizon >= 0 and math.isfinite(self.horizon)):
            raise ScenarioError("horizon must be finite and non-negative")
        if self.signal.horizon < self.horizon - 1e-12:
            raise ScenarioError("switching signal ends before the horizon")
        for _, k in self.signal.segments:
            if not 1 <= k <= topo.num_edgesets:
                raise ScenarioError(f"signal refers to edgeset {k}, topology has {topo.num_edgesets}")
        if len(self.signal.segments) > 1 and self.step > self.signal.dwell / 10 * (1 + 1e-12):
            raise ScenarioError(f"step {self.step} exceeds dwell/10 = {self.signal.dwell / 10}")


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    V: np.ndarray
    spread: np.ndarray
    sigma: np.ndarray
    switch_times: list[float] = field(default_factory=list)
    equilibrium_time: Optional[float] = None

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def final(self) -> np.ndarray:
        return self.x[-1]

    def at(self, t: float) -> np.ndarray:
        """State at the last sample not after ``t``."""
        k = int(np.searchsorted(self.t, t, side="right")) - 1
        return self.x[max(k, 0)]

    def csv_text(self) -> str:
        buf = io.StringIO()
        n = self.n
        header = ["t"] + [f"x{i}" for i in range(1, n + 1)] + [f"u{i}" for i in range(1, n + 1)] \
            + ["V", "spread", "sigma"]
        buf.write(",".join(header) + "\n")
        for k in range(self.t.size):
            vals = [self.t[k], *self.x[k], *self.u[k], self.V[k], self.spread[k]]
            buf.write(",".join(f"{v:.17g}" for v in vals) + f",{int(self.sigma[k])}\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.csv_text(), newline="\n")


def read_csv(path) -> Trajectory:
    """Load a trajectory written by :meth:`Trajectory.write_csv`."""
    text = Path(path).read_text()
    lines = text.strip("\n").split("\n")
    header = lines[0].split(",")
    n = sum(1 for h in header if h.startswith("x"))
    data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]]).reshape(-1, len(header))
    return Trajectory(t=data[:, 0], x=data[:, 1:1 + n], u=data[:, 1 + n:1 + 2 * n],
                      V=data[:, 1 + 2 * n], spread=data[:, 2 + 2 * n], sigma=data[:, 3 + 2 * n].astype(int))


def _time_grid(signal: SwitchingSignal, horizon: float, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Sample times and the edgeset active on [t_k, t_k+1) for each sample."""
    times: list[np.ndarray] = []
    sig: list[np.ndarray] = []
    for a, b, k in signal.segment_bounds():
        b = min(b, horizon)
        if a >= horizon:
            break
        count = max(1, int(math.ceil((b - a) / h - 1e-9)))
        ts = a + h * np.arange(count)
        times.append(ts)
        sig.append(np.full(count, k))
    times.append(np.array([horizon]))
    last = sig[-1][-1] if sig else signal.segments[0][1]
    sig.append(np.array([last]))
    t = np.concatenate(times)
    s = np.concatenate(sig)
    # a switch exactly at the horizon still counts for the final sample
    for start, k in signal.segments:
        if start == horizon:
            s[-1] = k
    return t, s


def edge_energy(x: np.ndarray, topology: Topology, k: int) -> np.ndarray | float:
    """Half the sum of squared differences over undirected edges (works row-wise)."""
    edges = np.array(topology.undirected_edges(k)) - 1
    diff = x[..., edges[:, 1]] - x[..., edges[:, 0]]
    return 0.5 * np.sum(diff * diff, axis=-1)


def integrate(scenario: Scenario) -> Trajectory:
    scenario.check()
    sc = scenario
    topo, xi, h = sc.topology, sc.xi, sc.step
    t_grid, sig = _time_grid(sc.signal, sc.horizon, h)
    N = t_grid.size
    n = topo.n

    cache: dict[int, tuple[np.ndarray, np.ndarray, dist.PiecewiseSeries]] = {}

    def parts(k: int):
        if k not in cache:
            a = np.array(topo.adjacency(k))
            cache[k] = (a, a.sum(axis=1), sc.disturbance.neighbor_sums(a))
        return cache[k]

    continuous = sc.disturbance.is_continuous
    X = np.empty((N, n))
    U = np.empty((N, n))
    x = sc.x0.copy()
    X[0] = x
    eq_count = 0
    eq_time = None
    last = N - 1
    for idx in range(N):
        t = float(t_grid[idx])
        k = int(sig[idx])
        A, deg, ds = parts(k)
        const = ds.is_constant
        d0 = ds(t)
        u = control_field(x, A, deg, d0, xi, sc.mode)
        U[idx] = u
        if not np.all(np.isfinite(u)):
            raise IntegrationError(t, "control became non-finite")
        if np.max(np.abs(u)) < EQUILIBRIUM_U:
            eq_count += 1
            if eq_count == EQUILIBRIUM_STEPS and eq_time is None:
                eq_time = float(t_grid[idx - EQUILIBRIUM_STEPS + 1])
                log.info("equilibrium reached at t=%.6g", eq_time)
                if sc.stop_at_equilibrium:
                    last = idx
                    break
        else:
            eq_count = 0
        if idx == N - 1:
            break
        dt = float(t_grid[idx + 1]) - t
        if const or not continuous:
            dm = d1 = d0
        else:
            dm, d1 = ds(t + 0.5 * dt), ds(t + dt)
        k1 = u
        k2 = control_field(x + 0.5 * dt * k1, A, deg, dm, xi, sc.mode)
        k3 = control_field(x + 0.5 * dt * k2, A, deg, dm, xi, sc.mode)
        k4 = control_field(x + dt * k3, A, deg, d1, xi, sc.mode)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(float(t_grid[idx + 1]))
        X[idx + 1] = x

    t_grid, sig = t_grid[:last + 1], sig[:last + 1]
    X, U = X[:last + 1], U[:last + 1]
    V = np.empty(last + 1)
    for k in np.unique(sig):
        rows = sig == k
        V[rows] = edge_energy(X[rows], topo, int(k))
    spread = X.max(axis=1) - X.min(axis=1)
    switches = [s for s in sc.signal.switch_times() if s <= t_grid[-1]]
    return Trajectory(t_grid, X, U, V, spread, sig.astype(int), switches, eq_time)


# -- two-agent reference system ---------------------------------------------------

@dataclass
class ReferenceTrajectory:
    t: np.ndarray
    xa: np.ndarray
    xb: np.ndarray
    t_hat: Optional[float]
    limit: float


def two_agent_closed_form(t, xa0: float, xb0: float, xi: float) -> tuple[np.ndarray, np.ndarray]:
    """States of the dominating two-agent system with constant disturbance xi."""
    t = np.asarray(t, dtype=float)
    gap = xa0 - xb0
    if gap <= 2 * xi:
        xa = np.full_like(t, xa0)
        xb = xa0 - gap * np.exp(-t)
        return xa, xb
    t_hat = 0.5 * math.log((gap - xi) / xi)
    e = np.exp(-2 * np.minimum(t, t_hat))
    tt = np.minimum(t, t_hat)
    xa = 0.5 * (xi * (1 + 2 * tt - e) + xa0 * (1 + e) + xb0 * (1 - e))
    xb = 0.5 * (xi * (-1 + 2 * tt + e) + xa0 * (1 - e) + xb0 * (1 + e))
    late = t > t_hat
    if np.any(late):
        # after t_hat the gap is 2 xi and agent b relaxes onto agent a
        xb = np.where(late, xa - 2 * xi * np.exp(-(t - t_hat)), xb)
    return xa, xb


def two_agent_limit(xa0: float, xb0: float, xi: float) -> float:
    gap = xa0 - xb0
    if gap <= 2 * xi:
        return xa0
    return 0.5 * (xa0 + xb0) + xi + 0.5 * xi * math.log((gap - xi) / xi)


def two_agent_scenario(xa0: float, xb0: float, xi: float, horizon: float, step: float = 1e-3,
                       sign: float = 1.0) -> Scenario:
    """Two connected agents under the constant disturbance ``sign * xi``."""
    topo = Topology.from_pairs(2, [[(1, 2)]])
    return Scenario(topo, SwitchingSignal.constant(1, horizon),
                    dist.constant(sign * xi, xi, n=2), np.array([xa0, xb0]),
                    step=step, horizon=horizon, allow_complete=True)


def two_agent_reference(xa0: float, xb0: float, xi: float, horizon: float, step: float = 1e-3,
                        validate: bool = True, tol: float = 1e-6) -> ReferenceTrajectory:
    """Closed-form trajectory of the two-agent system on the RK4 sample grid.

    With ``validate`` the closed form is checked against numerical
    integration of the same system and a mismatch above ``tol`` raises.
    """
    if xa0 < xb0:
        raise ValueError("need xa0 >= xb0")
    if not xi > 0:
        raise ValueError("xi must be positive")
    t = _time_grid(SwitchingSignal.constant(1, horizon), horizon, step)[0]
    xa, xb = two_agent_closed_form(t, xa0, xb0, xi)
    gap = xa0 - xb0
    t_hat = 0.5 * math.log((gap - xi) / xi) if gap > 2 * xi else None
    if validate:
        num = integrate(two_agent_scenario(xa0, xb0, xi, horizon, step))
        err = max(np.max(np.abs(num.x[:, 0] - xa)), np.max(np.abs(num.x[:, 1] - xb)))
        if err > tol * max(1.0, abs(xa0), abs(xb0)):
            raise RuntimeError(f"closed form and integration disagree by {err:.3g}")
    return ReferenceTrajectory(t, xa, xb, t_hat, two_agent_limit(xa0, xb0, xi))
