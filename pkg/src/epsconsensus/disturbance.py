"""Unknown-but-bounded disturbance realizations d(t) and box occupancy times.

Every realization is stored as knot times plus one n x n matrix per knot,
interpolated linearly (continuous kinds) or held constant between knots
(the relaxed ``step`` kind). This makes box occupancy exactly computable
for all kinds, including the seeded random one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .topology import SwitchingSignal

KINDS = ("constant", "piecewise_linear", "step", "random", "box_recurrent")


class InfeasibleRealizationError(ValueError):
    pass


def _offdiag(n: int) -> np.ndarray:
    return ~np.eye(n, dtype=bool)


def _check_xi(xi: float) -> float:
    xi = float(xi)
    if not xi > 0 or math.isinf(xi):
        raise ValueError(f"disturbance bound xi must be positive and finite, got {xi}")
    return xi


@dataclass(frozen=True)
class Box:
    """Sub-box Q = {d : d_minus <= d <= d_plus} of the hypercube D."""

    d_minus: np.ndarray
    d_plus: np.ndarray
    xi: float

    def __post_init__(self):
        lo = np.array(self.d_minus, dtype=float)
        hi = np.array(self.d_plus, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 2 or lo.shape[0] != lo.shape[1]:
            raise ValueError("box bounds must be square matrices of equal shape")
        xi = _check_xi(self.xi)
        off = _offdiag(lo.shape[0])
        tol = 1e-12 * xi
        if np.any(lo[off] < -xi - tol) or np.any(hi[off] > xi + tol):
            raise ValueError("box bounds must lie within [-xi, xi]")
        if np.any(lo[off] > hi[off]):
            raise ValueError("box lower bound exceeds upper bound")
        np.fill_diagonal(lo, 0.0)
        np.fill_diagonal(hi, 0.0)
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "d_minus", lo)
        object.__setattr__(self, "d_plus", hi)
        object.__setattr__(self, "xi", xi)

    @classmethod
    def uniform(cls, n: int, lower: float, upper: float, xi: float) -> Box:
        return cls(np.full((n, n), float(lower)), np.full((n, n), float(upper)), xi)

    @classmethod
    def full(cls, n: int, xi: float) -> Box:
        return cls.uniform(n, -xi, xi, xi)

    @property
    def n(self) -> int:
        return self.d_minus.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.d_minus + self.d_plus)

    def contains(self, d: np.ndarray, tol: float = 0.0) -> bool:
        off = _offdiag(self.n)
        d = np.asarray(d, dtype=float)
        return bool(np.all(d[off] >= self.d_minus[off] - tol) and np.all(d[off] <= self.d_plus[off] + tol))

    def is_subset(self, other: Box) -> bool:
        off = _offdiag(self.n)
        return bool(np.all(self.d_minus[off] >= other.d_minus[off]) and np.all(self.d_plus[off] <= other.d_plus[off]))


@dataclass(frozen=True)
class Disturbance:
    """A bounded realization d(t), t >= 0, over all ordered agent pairs.

    Before the first knot and after the last one the realization is held
    constant. ``params`` carries whatever a serializer needs to rebuild
    the realization from its generator (seed, box list, ...).
    """

    kind: str
    xi: float
    times: np.ndarray
    values: np.ndarray
    interpolation: str = "linear"
    params: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        if self.interpolation not in ("linear", "step"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")
        xi = _check_xi(self.xi)
        times = np.array(self.times, dtype=float).reshape(-1)
        values = np.array(self.values, dtype=float)
        if values.ndim != 3 or values.shape[0] != times.size or values.shape[1] != values.shape[2]:
            raise ValueError("values must have shape (len(times), n, n)")
        if times.size == 0:
            raise ValueError("need at least one knot")
        if np.any(np.diff(times) <= 0):
            raise ValueError("knot times must be strictly increasing")
        off = _offdiag(values.shape[1])
        if np.any(np.abs(values[:, off]) > xi * (1 + 1e-12)):
            raise ValueError(f"disturbance values exceed the bound xi={xi}")
        values = np.clip(values, -xi, xi)
        values[:, ~off] = 0.0
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def is_continuous(self) -> bool:
        return self.interpolation == "linear"

    def evaluate(self, t: float) -> np.ndarray:
        return _interp(self.times, self.values, t, self.interpolation)

    def neighbor_sums(self, adjacency: np.ndarray) -> PiecewiseSeries:
        """Per-agent sum of d_ij over neighbors j, as a function of time."""
        sums = np.einsum("ij,kij->ki", adjacency, self.values)
        return PiecewiseSeries(self.times, sums, self.interpolation)


@dataclass(frozen=True)
class PiecewiseSeries:
    """Vector-valued function of time sharing a realization's knots."""

    times: np.ndarray
    values: np.ndarray
    interpolation: str

    @property
    def is_constant(self) -> bool:
        return self.times.size == 1 or bool(np.all(self.values == self.values[0]))

    def __call__(self, t: float) -> np.ndarray:
        return _interp(self.times, self.values, t, self.interpolation)


def _interp(times: np.ndarray, values: np.ndarray, t: float, mode: str) -> np.ndarray:
    if t <= times[0]:
        return values[0]
    if t >= times[-1]:
        return values[-1]
    k = int(np.searchsorted(times, t, side="right")) - 1
    if mode == "step":
        return values[k]
    t0, t1 = times[k], times[k + 1]
    w = (t - t0) / (t1 - t0)
    return values[k] + w * (values[k + 1] - values[k])


# -- generators ---------------------------------------------------------------

def _as_matrix(d, n: int | None = None) -> np.ndarray:
    a = np.asarray(d, dtype=float)
    if a.ndim == 0:
        if n is None:
            raise ValueError("scalar disturbance needs an agent count")
        a = np.full((n, n), float(a))
    return a


def constant(d, xi: float, n: int | None = None) -> Disturbance:
    m = _as_matrix(d, n)
    return Disturbance("constant", xi, np.array([0.0]), m[None, :, :])


def piecewise_linear(times: Sequence[float], matrices: Sequence, xi: float) -> Disturbance:
    mats = np.stack([np.asarray(m, dtype=float) for m in matrices])
    return Disturbance("piecewise_linear", xi, np.asarray(times, dtype=float), mats)


def step(times: Sequence[float], matrices: Sequence, xi: float, relaxed: bool = False) -> Disturbance:
    """Piecewise-constant (discontinuous) realization; opt in with ``relaxed=True``."""
    if not relaxed:
        raise ValueError("discontinuous realizations require relaxed=True")
    mats = np.stack([np.asarray(m, dtype=float) for m in matrices])
    return Disturbance("step", xi, np.asarray(times, dtype=float), mats,
                       interpolation="step", params={"relaxed": True})


def seeded_random(n: int, xi: float, seed: int, horizon: float, knot_spacing: float = 1.0) -> Disturbance:
    """Continuous random realization: uniform knots in [-xi, xi], linear in between."""
    xi = _check_xi(xi)
    if knot_spacing <= 0:
        raise ValueError("knot spacing must be positive")
    count = int(math.ceil(max(horizon, 0.0) / knot_spacing)) + 1
    rng = np.random.default_rng(seed)
    vals = rng.uniform(-xi, xi, size=(count, n, n))
    times = np.arange(count) * knot_spacing
    return Disturbance("random", xi, times, vals, params={
        "seed": int(seed), "horizon": float(horizon), "knot_spacing": float(knot_spacing)})


def box_recurrent_realization(boxes: Sequence[Box], M: float, delta: float, horizon: float,
                              seed: int = 0, transition: float | None = None) -> Disturbance:
    """Realization spending more than ``delta`` inside every box in every window of length ``M``.

    The realization cycles through plateaus held at each box center and
    moves linearly between consecutive centers over ``transition`` seconds
    (default ``0.1 * delta``). The seed only picks the starting phase.
    """
    if not boxes:
        raise ValueError("need at least one box")
    if not 0 <= delta < M:
        raise InfeasibleRealizationError(f"need 0 <= delta < M, got delta={delta}, M={M}")
    xi = boxes[0].xi
    n = boxes[0].n
    for b in boxes:
        if b.n != n or b.xi != xi:
            raise ValueError("boxes must share agent count and bound")
    params = {"boxes": [(b.d_minus.tolist(), b.d_plus.tolist()) for b in boxes],
              "M": float(M), "delta": float(delta), "horizon": float(horizon),
              "seed": int(seed), "transition": transition}
    if len(boxes) == 1:
        return Disturbance("box_recurrent", xi, np.array([0.0]), boxes[0].center[None], params=params)

    r = len(boxes)
    ttr = 0.1 * delta if transition is None else float(transition)
    if ttr <= 0:
        raise ValueError("transition time must be positive")
    # a window of length M must hold > delta of each plateau: M > P - p + 2*delta, P = r*(p + ttr)
    p_max = (M - r * ttr - 2 * delta) / (r - 1)
    if not p_max > delta:
        raise InfeasibleRealizationError(
            f"{r} boxes with dwell {delta} and transitions {ttr} do not fit in windows of length {M}")
    plateau = 0.5 * (delta + p_max)
    period = r * (plateau + ttr)
    phase = float(np.random.default_rng(seed).uniform(0.0, period))

    times: list[float] = []
    mats: list[np.ndarray] = []
    t = -phase
    idx = 0
    while t <= horizon + period:
        c = boxes[idx % r].center
        times += [t, t + plateau]
        mats += [c, c]
        t += plateau + ttr
        idx += 1
    times_a = np.array(times)
    mats_a = np.stack(mats)
    keep = times_a > 0
    first = _interp(times_a, mats_a, 0.0, "linear")
    real = Disturbance("box_recurrent", xi, np.concatenate([[0.0], times_a[keep]]),
                       np.concatenate([first[None], mats_a[keep]]), params=params)
    _verify_recurrence(real, boxes, M, delta, horizon, period)
    return real


def _verify_recurrence(real: Disturbance, boxes: Sequence[Box], M: float, delta: float,
                       horizon: float, period: float) -> None:
    last = horizon - M
    if last < 0:
        return
    grid = np.linspace(0.0, last, max(2, int(math.ceil(last / (period / 40))) + 1))
    knots = real.times[(real.times >= 0) & (real.times <= horizon)]
    cand = np.concatenate([grid, knots, knots - M, knots - delta, knots - M + delta])
    cand = np.unique(np.clip(cand, 0.0, last))
    for q, box in enumerate(boxes):
        for t in cand:
            if not mu(real, box, t, t + M) > delta:
                raise InfeasibleRealizationError(
                    f"box {q + 1}: window [{t:.6g}, {t + M:.6g}] holds only "
                    f"{mu(real, box, t, t + M):.6g} <= {delta}")


# -- occupancy ----------------------------------------------------------------

def _piece_interval(real: Disturbance, box: Box, a: float, b: float, tol: float) -> tuple[float, float] | None:
    """Sub-interval of [a, b] on which d(t) is in ``box``, assuming d is linear there."""
    off = _offdiag(real.n)
    lo, hi = box.d_minus[off], box.d_plus[off]
    ea = real.evaluate(a)[off]
    if real.interpolation == "step" or b <= a:
        ok = np.all(ea >= lo - tol) and np.all(ea <= hi + tol)
        return (a, b) if ok else None
    eb = _interp(real.times, real.values, b, "linear")[off]
    slope = eb - ea
    s_lo, s_hi = 0.0, 1.0
    flat = np.abs(slope) <= tol
    if np.any(flat & ((ea < lo - tol) | (ea > hi + tol))):
        return None
    mv = ~flat
    if np.any(mv):
        r1 = (lo[mv] - tol - ea[mv]) / slope[mv]
        r2 = (hi[mv] + tol - ea[mv]) / slope[mv]
        s_lo = max(s_lo, float(np.max(np.minimum(r1, r2))))
        s_hi = min(s_hi, float(np.min(np.maximum(r1, r2))))
    if s_lo > s_hi:
        return None
    return a + s_lo * (b - a), a + s_hi * (b - a)


def mu(real: Disturbance, box: Box, t1: float, t2: float) -> float:
    """Length of the longest subinterval of [t1, t2] on which d(t) stays in ``box``."""
    if t2 < t1:
        raise ValueError(f"need t1 <= t2, got [{t1}, {t2}]")
    if t1 < 0:
        raise ValueError("t1 must be non-negative")
    if box.n != real.n:
        raise ValueError("box and realization disagree on agent count")
    tol = 1e-12 * real.xi
    inner = real.times[(real.times > t1) & (real.times < t2)]
    points = np.concatenate([[t1], inner, [t2]])
    best = 0.0
    run_start = run_end = None
    eps = 1e-12 * max(1.0, abs(t2))
    for a, b in zip(points[:-1], points[1:]):
        iv = _piece_interval(real, box, float(a), float(b), tol)
        if iv is None:
            run_start = run_end = None
            continue
        lo, hi = iv
        if run_end is not None and lo <= a + eps and run_end >= a - eps:
            run_end = hi
        else:
            run_start, run_end = lo, hi
        best = max(best, run_end - run_start)
        if hi < b - eps:
            run_start = run_end = None
    if t1 == t2:
        return 0.0
    return min(best, t2 - t1)


def mu_switched(real: Disturbance, signal: SwitchingSignal, box: Box, k: int, t1: float, t2: float) -> float:
    """Longest subinterval of [t1, t2] with d(t) in ``box`` while edgeset ``k`` is active."""
    if t2 < t1:
        raise ValueError(f"need t1 <= t2, got [{t1}, {t2}]")
    runs: list[list[float]] = []
    for a, b, kk in signal.segment_bounds():
        if kk != k:
            continue
        if runs and runs[-1][1] == a:
            runs[-1][1] = b
        else:
            runs.append([a, b])
    best = 0.0
    for a, b in runs:
        lo, hi = max(a, t1), min(b, t2)
        if hi > lo:
            best = max(best, mu(real, box, lo, hi))
    return best
