from pathlib import Path

import numpy as np
import pytest

from epsconsensus import disturbance as dist
from epsconsensus.cli import bundled_scenario
from epsconsensus.disturbance import Box
from epsconsensus.scenario_io import ScenarioFileError, dump_scenario, load_topology, parse_scenario, load_scenario
from epsconsensus.simulator import Scenario, integrate, read_csv
from epsconsensus.topology import SwitchingSignal, Topology, chain

GOLDEN = Path(__file__).parent / "golden"
BASE = """\
topology:
  agents: 3
  edgesets: [[[1, 2], [2, 3]]]
disturbance:
  kind: constant
  xi: 1.0
  fill: 0.25
initial_state: [1, 0, -1]
"""


def test_minimal_defaults():
    doc = parse_scenario(BASE)
    sc = doc.scenario
    assert sc.mode == "lazy" and sc.step == 1e-3 and sc.horizon == 20.0
    assert sc.signal.segments == ((0.0, 1),)
    off = ~np.eye(3, dtype=bool)
    assert np.all(sc.disturbance.evaluate(0)[off] == 0.25)


@pytest.mark.parametrize("text,line,fragment", [
    (BASE + "extra: 1\n", 9, "unknown key 'extra'"),
    (BASE.replace("fill: 0.25", "fill: 0.25\n  colour: red"), 8, "disturbance.colour"),
    (BASE.replace("initial_state: [1, 0, -1]", "initial_state: [1, 0]"), 8, "initial_state"),
    (BASE.replace("kind: constant", "kind: wobbly"), 5, "unknown disturbance kind"),
    (BASE.replace("[2, 3]]]", "[2, 4]]]"), 3, "outside"),
    (BASE.replace("xi: 1.0", "xi: -1"), 6, "positive"),
    (BASE + "protocol: {mode: greedy}\n", 9, "mode"),
    ("topology: [1, 2\n", 2, "YAML syntax error"),
])
def test_diagnostics_have_line_numbers(text, line, fragment):
    with pytest.raises(ScenarioFileError) as exc:
        parse_scenario(text, "f.scenario")
    assert exc.value.line == line
    assert fragment in str(exc.value)
    assert str(exc.value).startswith(f"f.scenario:{line}:")


def test_empty_and_missing_sections():
    with pytest.raises(ScenarioFileError):
        parse_scenario("")
    with pytest.raises(ScenarioFileError, match="initial_state"):
        parse_scenario(BASE.replace("initial_state: [1, 0, -1]\n", ""))


def test_complete_graph_needs_opt_in():
    text = BASE.replace("[[[1, 2], [2, 3]]]", "[[[1, 2], [2, 3], [1, 3]]]")
    with pytest.raises(ScenarioFileError, match="complete"):
        parse_scenario(text)
    text = text.replace("agents: 3", "agents: 3\n  allow_complete: true")
    assert parse_scenario(text).scenario.allow_complete


def test_recurrence_period_checked():
    text = BASE.replace("edgesets: [[[1, 2], [2, 3]]]", "edgesets: [[[1, 2], [2, 3]], [[1, 3], [2, 3]]]")
    ok = text + "signal:\n  cycle: {order: [1, 2], length: 2}\n  recurrence_period: 4.5\n"
    assert len(parse_scenario(ok).scenario.signal.segments) == 10
    with pytest.raises(ScenarioFileError, match="recurrent"):
        parse_scenario(text + "signal:\n  segments: [[0, 1], [2, 2]]\n  recurrence_period: 4\n")


def test_overrides():
    sc = parse_scenario(BASE, overrides={"step": 0.01, "horizon": 3.0, "mode": "naive"}).scenario
    assert (sc.step, sc.horizon, sc.mode) == (0.01, 3.0, "naive")
    text = BASE.replace("kind: constant", "kind: random").replace("  fill: 0.25\n", "  seed: 1\n")
    a = parse_scenario(text, overrides={"seed": 5}).scenario.disturbance
    assert a.params["seed"] == 5


def _round_trip(sc: Scenario):
    back = parse_scenario(dump_scenario(sc)).scenario
    a, b = integrate(sc), integrate(back)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.t, b.t)


def test_round_trip_every_kind():
    topo = Topology.from_pairs(4, [[(1, 2), (2, 3), (3, 4)], [(1, 2), (1, 3), (1, 4)]])
    sig = SwitchingSignal(((0, 1), (1.5, 2), (3.0, 1)), dwell=1.5, horizon=4.0)
    x0 = np.array([3.0, -1.0, 0.3333333333333333, 2.0])
    rng = np.random.default_rng(2)
    mats = [rng.uniform(-0.7, 0.7, (4, 4)) for _ in range(3)]
    for m in mats:
        np.fill_diagonal(m, 0)
    reals = [
        dist.constant(mats[0], 0.7),
        dist.piecewise_linear([0, 1.1, 2.9], mats, 0.7),
        dist.step([0, 1.1, 2.9], mats, 0.7, relaxed=True),
        dist.seeded_random(4, 0.7, 123, 4.0, knot_spacing=0.37),
        dist.box_recurrent_realization([Box.uniform(4, -0.7, -0.2, 0.7), Box.uniform(4, 0.2, 0.7, 0.7)],
                                       2.0, 0.5, 4.0, seed=3),
    ]
    for real in reals:
        _round_trip(Scenario(topo, sig, real, x0, step=0.01, horizon=4.0))


@pytest.mark.parametrize("name", ["example1_naive", "example1_lazy", "example3", "example4",
                                  "consensus_start", "ring5_switching"])
def test_bundled_round_trip_and_golden(name):
    doc = load_scenario(bundled_scenario(name))
    tr = integrate(doc.scenario)
    back = integrate(parse_scenario(dump_scenario(doc.scenario, doc.epsilon, doc.nu)).scenario)
    assert np.array_equal(tr.x, back.x)
    gold = read_csv(GOLDEN / f"{name}.csv")
    idx = np.searchsorted(tr.t, gold.t)
    assert np.array_equal(tr.t[idx], gold.t)
    assert np.max(np.abs(tr.x[idx] - gold.x)) <= 1e-9
    assert np.max(np.abs(tr.u[idx] - gold.u)) <= 1e-9


def test_load_topology_only(tmp_path):
    p = tmp_path / "t.yaml"
    p.write_text("topology: {agents: 3, edgesets: [[[1, 2], [1, 3]]]}\nxi: 2.0\n")
    topo, xi = load_topology(p)
    assert topo.undirected_edges(1) == [(1, 2), (1, 3)]
    assert xi == 2.0
    with pytest.raises(ScenarioFileError):
        load_topology(tmp_path / "missing.yaml")
