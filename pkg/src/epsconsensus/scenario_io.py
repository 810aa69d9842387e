"""Scenario files: strict YAML with line/column diagnostics.

A scenario file has these sections (``signal`` and ``report`` optional)::

    topology:      {agents: 6, edgesets: [[[1, 2], [2, 3]]], allow_complete: false}
    signal:        {segments: [[0, 1], [10, 2]], dwell: 10}   # or cycle: {order: [1, 2], length: 10}
    disturbance:   {kind: constant, xi: 1.0, entries: [[1, 2, 1.0]]}
    initial_state: [100, 100, 100, 0, 0, 0]
    protocol:      {mode: lazy}
    integration:   {step: 0.001, horizon: 20, stop_at_equilibrium: false}
    report:        {epsilon: 13.25, nu: 0.1}

Disturbance matrices can be given as ``matrix`` (full n x n), ``entries``
(``[i, j, value]`` triples, rest zero) or ``fill`` (one value everywhere).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from . import disturbance as dist
from .simulator import Scenario
from .topology import SwitchingSignal, Topology


class ScenarioFileError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None,
                 source: str = "<scenario>"):
        self.line, self.column, self.source = line, column, source
        where = source if line is None else f"{source}:{line}:{column}"
        super().__init__(f"{where}: {message}")


@dataclass
class ScenarioDocument:
    scenario: Scenario
    epsilon: Optional[float] = None
    nu: Optional[float] = None
    description: str = ""
    extra: dict[str, Any] = field(default_factory=dict)


_MATRIX_KEYS = {"matrix", "entries", "fill"}
_SCHEMA: dict[str, Any] = {
    "description": None,
    "topology": {"agents": None, "edgesets": None, "allow_complete": None},
    "signal": {"segments": None, "dwell": None, "cycle": {"order": None, "length": None},
               "recurrence_period": None},
    "disturbance": {"kind": None, "xi": None, "seed": None, "knot_spacing": None, "horizon": None,
                    "relaxed": None, "knots": None, "boxes": None, "M": None, "delta": None,
                    "transition": None, **{k: None for k in _MATRIX_KEYS}},
    "initial_state": None,
    "protocol": {"mode": None},
    "integration": {"step": None, "horizon": None, "stop_at_equilibrium": None},
    "report": {"epsilon": None, "nu": None},
}
_TOPOLOGY_SCHEMA = {"topology": _SCHEMA["topology"], "xi": None, "description": None}


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads YAML 1.2 floats such as ``1e-3``."""


_Loader.yaml_implicit_resolvers = {k: list(v) for k, v in yaml.SafeLoader.yaml_implicit_resolvers.items()}
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
    |\.[0-9_]+(?:[eE][-+][0-9]+)?
    |[-+]?\.(?:inf|Inf|INF)
    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


class _Doc:
    """Parsed YAML plus key positions, so errors can point into the file."""

    def __init__(self, text: str, source: str):
        self.source = source
        try:
            loader = _Loader(text)
            try:
                node = loader.get_single_node()
                self.data = loader.construct_document(node) if node is not None else None
            finally:
                loader.dispose()
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark
            raise ScenarioFileError(f"YAML syntax error: {exc.problem}",
                                    mark.line + 1 if mark else None,
                                    mark.column + 1 if mark else None, source) from None
        self.marks: dict[tuple, tuple[int, int]] = {}
        if node is not None:
            self._collect(node, ())

    def _collect(self, node, path: tuple) -> None:
        self.marks.setdefault(path, (node.start_mark.line + 1, node.start_mark.column + 1))
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = k.value
                self.marks[path + (key,)] = (k.start_mark.line + 1, k.start_mark.column + 1)
                self._collect(v, path + (key,))
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                self._collect(v, path + (i,))

    def error(self, message: str, path: tuple = ()) -> ScenarioFileError:
        p = path
        while p and p not in self.marks:
            p = p[:-1]
        line, col = self.marks.get(p, (None, None))
        return ScenarioFileError(message, line, col, self.source)

    def check_keys(self, data: Any, schema: dict, path: tuple = ()) -> None:
        if not isinstance(data, dict):
            raise self.error("expected a mapping", path)
        for key, value in data.items():
            if key not in schema:
                dotted = ".".join(str(p) for p in path + (key,))
                raise self.error(f"unknown key {dotted!r}", path + (key,))
            sub = schema[key]
            if isinstance(sub, dict):
                self.check_keys(value, sub, path + (key,))


def _num(doc: _Doc, value, path, positive=False, integer=False, allow_zero=True):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise doc.error(f"expected a number at {'.'.join(map(str, path))}", path)
    if integer and not float(value).is_integer():
        raise doc.error("expected an integer", path)
    if not math.isfinite(value):
        raise doc.error("expected a finite number", path)
    if positive and not (value > 0 or (allow_zero and value == 0)):
        raise doc.error("expected a positive number", path)
    return int(value) if integer else float(value)


def _matrix(doc: _Doc, spec: dict, n: int, path: tuple) -> np.ndarray:
    given = [k for k in _MATRIX_KEYS if k in spec]
    if len(given) != 1:
        raise doc.error("give exactly one of matrix, entries, fill", path)
    key = given[0]
    if key == "fill":
        m = np.full((n, n), _num(doc, spec["fill"], path + ("fill",)))
    elif key == "matrix":
        try:
            m = np.array(spec["matrix"], dtype=float)
        except (TypeError, ValueError):
            raise doc.error("matrix must be numeric", path + ("matrix",)) from None
        if m.shape != (n, n):
            raise doc.error(f"matrix must be {n}x{n}", path + ("matrix",))
    else:
        m = np.zeros((n, n))
        for q, e in enumerate(spec["entries"] or []):
            if not (isinstance(e, list) and len(e) == 3):
                raise doc.error("entries are [i, j, value] triples", path + ("entries", q))
            i = _num(doc, e[0], path + ("entries", q), integer=True)
            j = _num(doc, e[1], path + ("entries", q), integer=True)
            if not (1 <= i <= n and 1 <= j <= n) or i == j:
                raise doc.error(f"entry ({i},{j}) is not an ordered pair of distinct agents", path + ("entries", q))
            m[i - 1, j - 1] = _num(doc, e[2], path + ("entries", q))
    np.fill_diagonal(m, 0.0)
    return m


def _build_disturbance(doc: _Doc, spec: dict, n: int, horizon: float) -> dist.Disturbance:
    path = ("disturbance",)
    if "xi" not in spec:
        raise doc.error("disturbance.xi is required", path)
    xi = _num(doc, spec["xi"], path + ("xi",), positive=True, allow_zero=False)
    kind = spec.get("kind", "constant")
    try:
        if kind == "constant":
            return dist.constant(_matrix(doc, spec, n, path), xi)
        if kind in ("piecewise_linear", "step"):
            knots = spec.get("knots")
            if not isinstance(knots, list) or not knots:
                raise doc.error("knots must be a non-empty list", path + ("knots",))
            times, mats = [], []
            for q, kn in enumerate(knots):
                kp = path + ("knots", q)
                if not isinstance(kn, dict) or "t" not in kn:
                    raise doc.error("each knot needs t and a matrix", kp)
                extra = set(kn) - _MATRIX_KEYS - {"t"}
                if extra:
                    raise doc.error(f"unknown key {sorted(extra)[0]!r} in knot", kp + (sorted(extra)[0],))
                times.append(_num(doc, kn["t"], kp + ("t",), positive=True))
                mats.append(_matrix(doc, kn, n, kp))
            if kind == "step":
                return dist.step(times, mats, xi, relaxed=bool(spec.get("relaxed", False)))
            return dist.piecewise_linear(times, mats, xi)
        if kind == "random":
            return dist.seeded_random(
                n, xi, _num(doc, spec.get("seed", 0), path + ("seed",), integer=True),
                _num(doc, spec.get("horizon", horizon), path + ("horizon",), positive=True),
                _num(doc, spec.get("knot_spacing", 1.0), path + ("knot_spacing",), positive=True, allow_zero=False))
        if kind == "box_recurrent":
            boxes = []
            for q, b in enumerate(spec.get("boxes") or []):
                bp = path + ("boxes", q)
                if not isinstance(b, dict) or set(b) != {"lower", "upper"}:
                    raise doc.error("each box needs exactly lower and upper", bp)
                lo = _box_side(doc, b["lower"], n, bp + ("lower",))
                hi = _box_side(doc, b["upper"], n, bp + ("upper",))
                boxes.append(dist.Box(lo, hi, xi))
            if not boxes:
                raise doc.error("box_recurrent needs at least one box", path + ("boxes",))
            tr = spec.get("transition")
            return dist.box_recurrent_realization(
                boxes, _num(doc, spec.get("M"), path + ("M",), positive=True),
                _num(doc, spec.get("delta"), path + ("delta",), positive=True),
                _num(doc, spec.get("horizon", horizon), path + ("horizon",), positive=True),
                seed=_num(doc, spec.get("seed", 0), path + ("seed",), integer=True),
                transition=None if tr is None else _num(doc, tr, path + ("transition",), positive=True))
    except ScenarioFileError:
        raise
    except ValueError as exc:
        raise doc.error(str(exc), path) from None
    raise doc.error(f"unknown disturbance kind {kind!r}", path + ("kind",))


def _box_side(doc: _Doc, value, n: int, path: tuple) -> np.ndarray:
    if isinstance(value, list):
        m = np.array(value, dtype=float)
        if m.shape != (n, n):
            raise doc.error(f"box side must be a scalar or {n}x{n} matrix", path)
        return m
    return np.full((n, n), _num(doc, value, path))


def _build_topology(doc: _Doc, spec: Any) -> Topology:
    path = ("topology",)
    if not isinstance(spec, dict) or "agents" not in spec or "edgesets" not in spec:
        raise doc.error("topology needs agents and edgesets", path)
    n = _num(doc, spec["agents"], path + ("agents",), integer=True)
    if n < 2:
        raise doc.error("need at least two agents", path + ("agents",))
    sets = spec["edgesets"]
    if not isinstance(sets, list) or not sets:
        raise doc.error("edgesets must be a non-empty list", path + ("edgesets",))
    for k, es in enumerate(sets):
        if not isinstance(es, list):
            raise doc.error("each edgeset is a list of [i, j] pairs", path + ("edgesets", k))
        for q, p in enumerate(es):
            pp = path + ("edgesets", k, q)
            if not (isinstance(p, list) and len(p) == 2):
                raise doc.error("each edge is an [i, j] pair", pp)
            for v in p:
                a = _num(doc, v, pp, integer=True)
                if not 1 <= a <= n:
                    raise doc.error(f"agent {a} outside 1..{n}", pp)
    return Topology.from_pairs(n, sets)


def _build_signal(doc: _Doc, spec: Optional[dict], topo: Topology, horizon: float,
                  clip: bool = False) -> SwitchingSignal:
    path = ("signal",)
    if spec is None:
        return SwitchingSignal.constant(1, horizon)
    try:
        if "cycle" in spec:
            if "segments" in spec:
                raise doc.error("give either segments or cycle, not both", path)
            cyc = spec["cycle"]
            order = [int(_num(doc, k, path + ("cycle", "order"), integer=True)) for k in cyc.get("order", [])]
            if not order:
                raise doc.error("cycle.order must list edgeset indices", path + ("cycle",))
            length = _num(doc, cyc.get("length"), path + ("cycle", "length"), positive=True, allow_zero=False)
            sig = SwitchingSignal.cycle(order, length, horizon)
            if "dwell" in spec:
                sig = SwitchingSignal(sig.segments, _num(doc, spec["dwell"], path + ("dwell",)), horizon)
        else:
            segs = spec.get("segments")
            if not isinstance(segs, list) or not segs:
                raise doc.error("signal needs segments or cycle", path)
            parsed = []
            for q, s in enumerate(segs):
                if not (isinstance(s, list) and len(s) == 2):
                    raise doc.error("segments are [start_time, edgeset] pairs", path + ("segments", q))
                parsed.append((_num(doc, s[0], path + ("segments", q), positive=True),
                               _num(doc, s[1], path + ("segments", q), integer=True)))
            if clip:
                # a shortened horizon drops the segments it no longer reaches
                parsed = [p for p in parsed if p[0] <= horizon] or parsed[:1]
            starts = [t for t, _ in parsed]
            default_dwell = min((b - a for a, b in zip(starts, starts[1:])), default=max(horizon, 1.0))
            dwell = _num(doc, spec.get("dwell", default_dwell), path + ("dwell",), positive=True, allow_zero=False)
            sig = SwitchingSignal(tuple(parsed), dwell, horizon)
    except ScenarioFileError:
        raise
    except ValueError as exc:
        raise doc.error(str(exc), path) from None
    for _, k in sig.segments:
        if not 1 <= k <= topo.num_edgesets:
            raise doc.error(f"edgeset index {k} out of range 1..{topo.num_edgesets}", path)
    period = spec.get("recurrence_period")
    if period is not None:
        period = _num(doc, period, path + ("recurrence_period",), positive=True, allow_zero=False)
        if not sig.is_recurrent(period, topo.num_edgesets):
            raise doc.error(f"signal is not recurrent with period {period}", path + ("recurrence_period",))
    return sig


def parse_scenario(text: str, source: str = "<scenario>", overrides: Optional[dict] = None) -> ScenarioDocument:
    """Parse scenario text. ``overrides`` may set step, horizon, mode, seed, stop_at_equilibrium."""
    doc = _Doc(text, source)
    data = doc.data
    if data is None:
        raise ScenarioFileError("empty scenario file", source=source)
    doc.check_keys(data, _SCHEMA)
    for section in ("topology", "disturbance", "initial_state"):
        if section not in data:
            raise doc.error(f"missing section {section!r}")
    ov = dict(overrides or {})
    integ = data.get("integration") or {}
    step = ov.get("step") or _num(doc, integ.get("step", 1e-3), ("integration", "step"), positive=True, allow_zero=False)
    horizon = ov.get("horizon")
    if horizon is None:
        horizon = _num(doc, integ.get("horizon", 20.0), ("integration", "horizon"), positive=True)
    stop = ov.get("stop_at_equilibrium") or bool(integ.get("stop_at_equilibrium", False))
    topo = _build_topology(doc, data["topology"])
    allow_complete = bool(data["topology"].get("allow_complete", False))

    dspec = dict(data["disturbance"])
    if ov.get("seed") is not None:
        dspec["seed"] = int(ov["seed"])
    real = _build_disturbance(doc, dspec, topo.n, horizon)
    sig = _build_signal(doc, data.get("signal"), topo, horizon, clip=ov.get("horizon") is not None)

    x0 = data["initial_state"]
    if not isinstance(x0, list) or len(x0) != topo.n:
        raise doc.error(f"initial_state must list {topo.n} numbers", ("initial_state",))
    x0 = [_num(doc, v, ("initial_state", i)) for i, v in enumerate(x0)]
    mode = ov.get("mode") or (data.get("protocol") or {}).get("mode", "lazy")
    if mode not in ("lazy", "naive"):
        raise doc.error(f"unknown protocol mode {mode!r}", ("protocol", "mode"))
    sc = Scenario(topo, sig, real, np.array(x0), mode=mode, step=float(step), horizon=float(horizon),
                  stop_at_equilibrium=stop, allow_complete=allow_complete)
    try:
        sc.check()
    except ValueError as exc:
        raise doc.error(str(exc)) from None
    rep = data.get("report") or {}
    eps = rep.get("epsilon")
    nu = rep.get("nu")
    return ScenarioDocument(
        sc,
        epsilon=None if eps is None else _num(doc, eps, ("report", "epsilon"), positive=True),
        nu=None if nu is None else _num(doc, nu, ("report", "nu"), positive=True, allow_zero=False),
        description=str(data.get("description", "")),
    )


def load_scenario(path, overrides: Optional[dict] = None) -> ScenarioDocument:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioFileError(f"cannot read file: {exc.strerror}", source=str(p)) from None
    return parse_scenario(text, str(p), overrides)


def load_topology(path) -> tuple[Topology, Optional[float]]:
    """Topology (and xi if present) from a scenario file or a topology-only file."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioFileError(f"cannot read file: {exc.strerror}", source=str(p)) from None
    doc = _Doc(text, str(p))
    data = doc.data
    if not isinstance(data, dict) or "topology" not in data:
        raise doc.error("missing section 'topology'")
    if set(data) <= set(_TOPOLOGY_SCHEMA):
        doc.check_keys(data, _TOPOLOGY_SCHEMA)
        xi = data.get("xi")
        return _build_topology(doc, data["topology"]), None if xi is None else _num(doc, xi, ("xi",), positive=True)
    sd = parse_scenario(text, str(p))
    return sd.scenario.topology, sd.scenario.xi


# -- serialization -----------------------------------------------------------------

def _mat(m: np.ndarray) -> dict:
    return {"matrix": [[float(v) for v in row] for row in m]}


def scenario_to_dict(sc: Scenario, epsilon: Optional[float] = None, nu: Optional[float] = None) -> dict:
    topo = sc.topology
    real = sc.disturbance
    d: dict[str, Any] = {"kind": real.kind, "xi": real.xi}
    p = real.params
    if real.kind == "constant":
        d.update(_mat(real.values[0]))
    elif real.kind in ("piecewise_linear", "step"):
        d["knots"] = [{"t": float(t), **_mat(v)} for t, v in zip(real.times, real.values)]
        if real.kind == "step":
            d["relaxed"] = True
    elif real.kind == "random":
        d.update(seed=p["seed"], knot_spacing=p["knot_spacing"], horizon=p["horizon"])
    elif real.kind == "box_recurrent":
        d["boxes"] = [{"lower": lo, "upper": hi} for lo, hi in p["boxes"]]
        d.update(M=p["M"], delta=p["delta"], seed=p["seed"], horizon=p["horizon"])
        if p.get("transition") is not None:
            d["transition"] = p["transition"]
    out = {
        "topology": {"agents": topo.n,
                     "edgesets": [[list(e) for e in topo.undirected_edges(k)]
                                  for k in range(1, topo.num_edgesets + 1)]},
        "signal": {"segments": [[t, k] for t, k in sc.signal.segments], "dwell": sc.signal.dwell},
        "disturbance": d,
        "initial_state": [float(v) for v in sc.x0],
        "protocol": {"mode": sc.mode},
        "integration": {"step": sc.step, "horizon": sc.horizon,
                        "stop_at_equilibrium": sc.stop_at_equilibrium},
    }
    if sc.allow_complete:
        out["topology"]["allow_complete"] = True
    rep = {k: v for k, v in (("epsilon", epsilon), ("nu", nu)) if v is not None}
    if rep:
        out["report"] = rep
    return out


def dump_scenario(sc: Scenario, epsilon: Optional[float] = None, nu: Optional[float] = None) -> str:
    return yaml.safe_dump(scenario_to_dict(sc, epsilon, nu), sort_keys=False, default_flow_style=None)
