"""Agents, candidate edgesets and piecewise-constant switching signals.

Agent ids and edgeset indices are 1-based throughout the public API and
in serialized files. Arrays returned by :meth:`Topology.adjacency` are
ordinary 0-based numpy arrays.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

Pair = tuple[int, int]


@dataclass(frozen=True)
class Topology:
    """A fixed agent set with an ordered family of candidate edgesets.

    Each edgeset is a frozenset of *ordered* pairs ``(i, j)``. Use
    :meth:`from_pairs` to build symmetric edgesets from undirected pair
    lists; the raw constructor keeps whatever it is given so that
    :func:`validate` has something to report on.
    """

    n: int
    edgesets: tuple[frozenset[Pair], ...]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"agent count must be positive, got {self.n}")
        if not self.edgesets:
            raise ValueError("topology needs at least one edgeset")
        for k, es in enumerate(self.edgesets, start=1):
            for i, j in es:
                if not (1 <= i <= self.n and 1 <= j <= self.n):
                    raise ValueError(f"edgeset {k}: pair ({i},{j}) outside agents 1..{self.n}")

    @classmethod
    def from_pairs(cls, n: int, edgesets: Iterable[Iterable[Sequence[int]]]) -> Topology:
        """Build a topology from undirected pair lists (both directions added)."""
        sets = []
        for es in edgesets:
            pairs = set()
            for p in es:
                i, j = int(p[0]), int(p[1])
                pairs.add((i, j))
                pairs.add((j, i))
            sets.append(frozenset(pairs))
        return cls(n, tuple(sets))

    @property
    def num_edgesets(self) -> int:
        return len(self.edgesets)

    def _check_index(self, k: int) -> frozenset[Pair]:
        if not 1 <= k <= len(self.edgesets):
            raise IndexError(f"edgeset index {k} out of range 1..{len(self.edgesets)}")
        return self.edgesets[k - 1]

    def undirected_edges(self, k: int) -> list[Pair]:
        """Edges of edgeset ``k`` with each unordered pair listed once (i < j)."""
        es = self._check_index(k)
        return sorted({(min(i, j), max(i, j)) for i, j in es if i != j})

    @cached_property
    def _adjacency(self) -> tuple[np.ndarray, ...]:
        mats = []
        for es in self.edgesets:
            a = np.zeros((self.n, self.n))
            for i, j in es:
                a[i - 1, j - 1] = 1.0
            a.setflags(write=False)
            mats.append(a)
        return tuple(mats)

    def adjacency(self, k: int) -> np.ndarray:
        """Read-only 0/1 matrix with ``A[i-1, j-1] = 1`` iff ``(i, j)`` is in edgeset ``k``."""
        self._check_index(k)
        return self._adjacency[k - 1]

    def degrees(self, k: int) -> np.ndarray:
        return self.adjacency(k).sum(axis=1)


def chain(n: int) -> Topology:
    return Topology.from_pairs(n, [[(i, i + 1) for i in range(1, n)]])


def star(n: int, center: int = 1) -> Topology:
    return Topology.from_pairs(n, [[(center, j) for j in range(1, n + 1) if j != center]])


def ring(n: int) -> Topology:
    if n < 3:
        raise ValueError("a ring needs at least 3 agents")
    return Topology.from_pairs(n, [[(i, i % n + 1) for i in range(1, n + 1)]])


@dataclass
class EdgesetCheck:
    index: int
    symmetric: bool
    connected: bool
    not_complete: bool
    no_self_loops: bool

    @property
    def ok(self) -> bool:
        return self.symmetric and self.connected and self.not_complete and self.no_self_loops


@dataclass
class ValidationReport:
    checks: list[EdgesetCheck]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def structurally_ok(self) -> bool:
        """Everything except the non-completeness requirement holds."""
        return all(c.symmetric and c.connected and c.no_self_loops for c in self.checks)

    def failures(self) -> list[str]:
        out = []
        for c in self.checks:
            for name in ("symmetric", "connected", "not_complete", "no_self_loops"):
                if not getattr(c, name):
                    out.append(f"edgeset {c.index}: {name.replace('_', ' ')} failed")
        return out


def _connected(n: int, pairs: frozenset[Pair]) -> bool:
    adj: dict[int, set[int]] = {i: set() for i in range(1, n + 1)}
    for i, j in pairs:
        adj[i].add(j)
        adj[j].add(i)
    seen = {1}
    stack = [1]
    while stack:
        i = stack.pop()
        for j in adj[i]:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return len(seen) == n


def validate(topology: Topology) -> ValidationReport:
    checks = []
    n = topology.n
    for k, es in enumerate(topology.edgesets, start=1):
        undirected = {(min(i, j), max(i, j)) for i, j in es if i != j}
        checks.append(EdgesetCheck(
            index=k,
            symmetric=all((j, i) in es for i, j in es),
            connected=_connected(n, es),
            not_complete=len(undirected) < n * (n - 1) // 2,
            no_self_loops=all(i != j for i, j in es),
        ))
    return ValidationReport(checks)


def neighbors(topology: Topology, k: int, i: int) -> frozenset[int]:
    es = topology._check_index(k)
    if not 1 <= i <= topology.n:
        raise IndexError(f"agent {i} out of range 1..{topology.n}")
    return frozenset(j for a, j in es if a == i and j != i)


@dataclass(frozen=True)
class SwitchingSignal:
    """Right-continuous piecewise-constant map from time to edgeset index.

    ``segments`` holds ``(start_time, edgeset_index)`` pairs; the first
    segment must start at 0. The final segment runs to ``horizon`` and is
    exempt from the dwell check, since the horizon may cut it short.
    """

    segments: tuple[tuple[float, int], ...]
    dwell: float
    horizon: float
    starts: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        segs = tuple((float(t), int(k)) for t, k in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValueError("switching signal needs at least one segment")
        if segs[0][0] != 0.0:
            raise ValueError("first segment must start at t=0")
        if not self.dwell > 0:
            raise ValueError(f"dwell time must be positive, got {self.dwell}")
        if not self.horizon >= 0 or math.isinf(self.horizon):
            raise ValueError(f"horizon must be finite and non-negative, got {self.horizon}")
        starts = [t for t, _ in segs]
        for a, b in zip(starts, starts[1:]):
            if not b > a:
                raise ValueError("segment start times must be strictly increasing")
            if b - a < self.dwell * (1 - 1e-12):
                raise ValueError(f"segment [{a}, {b}) shorter than dwell time {self.dwell}")
        if starts[-1] > self.horizon:
            raise ValueError("segment starts beyond the horizon")
        object.__setattr__(self, "starts", tuple(starts))

    @classmethod
    def constant(cls, k: int, horizon: float) -> SwitchingSignal:
        return cls(((0.0, k),), dwell=max(horizon, 1.0), horizon=horizon)

    @classmethod
    def cycle(cls, order: Sequence[int], length: float, horizon: float) -> SwitchingSignal:
        """Cycle through ``order`` with segments of equal ``length``."""
        if length <= 0:
            raise ValueError("segment length must be positive")
        count = max(1, math.ceil(horizon / length - 1e-12))
        segs = [(i * length, order[i % len(order)]) for i in range(count)]
        return cls(tuple(segs), dwell=length, horizon=horizon)

    def switch_times(self) -> list[float]:
        """Times where the active edgeset actually changes."""
        out = []
        for (_, ka), (t, kb) in zip(self.segments, self.segments[1:]):
            if ka != kb:
                out.append(t)
        return out

    def segment_bounds(self) -> list[tuple[float, float, int]]:
        """``(start, end, index)`` for every segment, clipped to the horizon."""
        ends = list(self.starts[1:]) + [self.horizon]
        return [(t, e, k) for (t, k), e in zip(self.segments, ends)]

    def recurrence_gaps(self) -> dict[int, float]:
        """Longest stretch of the horizon during which each index is inactive."""
        gaps: dict[int, float] = {}
        indices = {k for _, k in self.segments}
        for k in indices:
            longest = 0.0
            last_end = 0.0
            for a, b, kk in self.segment_bounds():
                if kk == k:
                    longest = max(longest, a - last_end)
                    last_end = b
            longest = max(longest, self.horizon - last_end)
            gaps[k] = longest
        return gaps

    def is_recurrent(self, period: float, num_edgesets: int) -> bool:
        """Every index in ``1..num_edgesets`` is active in every window of ``period``."""
        gaps = self.recurrence_gaps()
        return all(k in gaps and gaps[k] < period for k in range(1, num_edgesets + 1))


def active_edgeset(signal: SwitchingSignal, t: float) -> int:
    if t < 0 or t > signal.horizon:
        raise ValueError(f"t={t} outside signal horizon [0, {signal.horizon}]")
    pos = bisect.bisect_right(signal.starts, t) - 1
    return signal.segments[pos][1]
