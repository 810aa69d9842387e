"""Distributed stationary control from disturbed neighbor measurements.

Each agent i receives y_ij = x_j + d_ij from its neighbors and applies
u_i = sum_j (ytilde_ij - x_i). Under the lazy rule the estimates ytilde_ij
are picked inside [y_ij - xi, y_ij + xi] to make |u_i| as small as
possible, which reduces to a deadband on x_i around the measured mean.
The naive rule uses ytilde_ij = y_ij.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .topology import Topology, neighbors

MODES = ("lazy", "naive")
# deadband excesses below this many ulps of the operands count as zero
ROUNDOFF = 64 * np.finfo(float).eps


@dataclass(frozen=True)
class ControlOutput:
    u: float
    lazy_sum: float


def lazy_sum(x_i: float, meas: Mapping[int, float], xi: float) -> float:
    """Sum of the lazy estimates for one agent, in closed form."""
    if not meas:
        raise ValueError("agent has no neighbors")
    if not xi > 0:
        raise ValueError("xi must be positive")
    k = len(meas)
    total = float(sum(meas.values()))
    mean = total / k
    excess = abs(x_i - mean) - xi
    if excess <= ROUNDOFF * max(abs(x_i), abs(mean), xi):
        return k * x_i
    return total + k * xi if x_i > mean else total - k * xi


def control(x_i: float, meas: Mapping[int, float], xi: float, mode: str = "lazy") -> ControlOutput:
    if mode == "lazy":
        s = lazy_sum(x_i, meas, xi)
    elif mode == "naive":
        if not meas:
            raise ValueError("agent has no neighbors")
        s = float(sum(meas.values()))
    else:
        raise ValueError(f"unknown protocol mode {mode!r}")
    return ControlOutput(u=s - len(meas) * x_i, lazy_sum=s)


def field(x: np.ndarray, adjacency: np.ndarray, degree: np.ndarray, dsum: np.ndarray,
          xi: float, mode: str = "lazy") -> np.ndarray:
    """Control vector for all agents at once.

    ``dsum[i]`` is the sum of d_ij over the neighbors of i, so that
    ``adjacency @ x + dsum`` is the vector of measurement sums.
    """
    total = adjacency @ x + dsum
    if mode == "naive":
        return total - degree * x
    mean = total / degree
    gap = x - mean
    excess = np.abs(gap) - xi
    floor = ROUNDOFF * np.maximum(np.maximum(np.abs(x), np.abs(mean)), xi)
    return -degree * np.sign(gap) * np.where(excess > floor, excess, 0.0)


def measurements(x: np.ndarray, d: np.ndarray, topology: Topology, k: int, i: int) -> dict[int, float]:
    """Disturbed readings y_ij = x_j + d_ij agent ``i`` gets under edgeset ``k``."""
    return {j: float(x[j - 1] + d[i - 1, j - 1]) for j in sorted(neighbors(topology, k, i))}


def sign_consistency(x, d, topology: Topology, k: int, xi: float) -> list[bool]:
    """Per agent: the control is zero or has the sign of sum_j (x_j - x_i)."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    out = []
    for i in range(1, topology.n + 1):
        meas = measurements(x, d, topology, k, i)
        u = control(float(x[i - 1]), meas, xi).u
        pull = sum(float(x[j - 1]) - float(x[i - 1]) for j in meas)
        out.append(bool(u == 0.0 or np.sign(u) == np.sign(pull)))
    return out
