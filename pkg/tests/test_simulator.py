import numpy as np
import pytest

from epsconsensus import disturbance as dist
from epsconsensus.simulator import (IntegrationError, Scenario, ScenarioError, integrate, read_csv,
                                    two_agent_closed_form, two_agent_reference, two_agent_scenario)
from epsconsensus.topology import SwitchingSignal, Topology, chain, ring
import oracles


def _scenario(topo=None, real=None, x0=(3.0, -1.0, 0.5, 2.0), **kw):
    topo = topo or chain(4)
    horizon = kw.pop("horizon", 5.0)
    signal = kw.pop("signal", SwitchingSignal.constant(1, horizon))
    real = real or dist.seeded_random(topo.n, 0.5, 1, horizon)
    return Scenario(topo, signal, real, np.array(x0), horizon=horizon, **kw)


def test_csv_round_trip(tmp_path):
    tr = integrate(_scenario(step=0.01))
    path = tmp_path / "t.csv"
    tr.write_csv(path)
    text = path.read_bytes().decode()
    assert text.splitlines()[0] == "t,x1,x2,x3,x4,u1,u2,u3,u4,V,spread,sigma"
    assert "\r" not in text
    back = read_csv(path)
    assert np.array_equal(back.x, tr.x) and np.array_equal(back.t, tr.t) and np.array_equal(back.sigma, tr.sigma)


def test_consensus_start_stays_put():
    tr = integrate(_scenario(x0=(2.0, 2.0, 2.0, 2.0), step=0.01))
    assert np.all(tr.x == 2.0) and np.all(tr.u == 0.0)


def test_step_halving_converges():
    a = integrate(_scenario(step=2e-3)).final
    b = integrate(_scenario(step=1e-3)).final
    assert np.max(np.abs(a - b)) < 1e-6


def test_grid_hits_switch_times_exactly():
    topo = Topology.from_pairs(3, [[(1, 2), (2, 3)], [(1, 2), (1, 3)]])
    sig = SwitchingSignal(((0, 1), (1.2345, 2), (3.0, 1)), dwell=1.0, horizon=4.0)
    tr = integrate(_scenario(topo, x0=(1, 0, 2), signal=sig, horizon=4.0, step=0.01))
    for s in (1.2345, 3.0):
        k = int(np.flatnonzero(tr.t == s)[0])
        assert tr.sigma[k] == (2 if s < 2 else 1) and tr.sigma[k - 1] != tr.sigma[k]
    assert tr.t[-1] == 4.0 and np.all(np.diff(tr.t) > 0)
    assert tr.switch_times == [1.2345, 3.0]


def test_equilibrium_flag_and_stop():
    real = dist.constant(np.zeros((4, 4)), 1.0)
    tr = integrate(_scenario(real=real, horizon=40.0, step=0.01))
    assert tr.equilibrium_time is not None and tr.t[-1] == 40.0
    stopped = integrate(_scenario(real=real, horizon=40.0, step=0.01, stop_at_equilibrium=True))
    assert tr.equilibrium_time < stopped.t[-1] < 40.0
    assert np.array_equal(stopped.x, tr.x[:stopped.t.size])


def test_scenario_checks():
    with pytest.raises(ScenarioError):
        integrate(_scenario(ring(3), x0=(1, 2, 3)))
    integrate(_scenario(ring(3), x0=(1, 2, 3), allow_complete=True, step=0.01))
    with pytest.raises(ScenarioError):
        integrate(_scenario(Topology.from_pairs(4, [[(1, 2), (3, 4)]])))
    sig = SwitchingSignal(((0, 1), (1.0, 1)), dwell=1.0, horizon=5.0)
    with pytest.raises(ScenarioError):
        integrate(_scenario(signal=sig, step=0.2))
    with pytest.raises(ScenarioError):
        integrate(_scenario(x0=(1, 2, 3)))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_state_raises():
    real = dist.constant(np.zeros((3, 3)), 1.0)
    with pytest.raises(IntegrationError):
        integrate(_scenario(chain(3), real, x0=(1.7e308, -1.7e308, 1.7e308), step=0.1, horizon=1.0))


def test_naive_mode_preserves_sum_drift():
    # naive rule: sum of controls equals the sum of disturbances over edges
    d = np.zeros((3, 3))
    d[0, 1], d[1, 0], d[1, 2] = 1.0, 0.5, 0.5
    tr = integrate(_scenario(chain(3), dist.constant(d, 1.0), x0=(4, 0, -3), mode="naive", horizon=10.0))
    assert np.allclose(tr.u.sum(axis=1), 2.0, atol=1e-9)


def test_boundedness_by_initial_extremes():
    rng = np.random.default_rng(3)
    for seed in range(10):
        x0 = rng.normal(scale=10, size=5)
        tr = integrate(_scenario(ring(5), dist.seeded_random(5, 1.0, seed, 10.0), x0=x0, horizon=10.0, step=0.01))
        assert tr.x.max() <= x0.max() + 1e-9 and tr.x.min() >= x0.min() - 1e-9


@pytest.mark.parametrize("xa0,xb0,xi", [(10.0, 0.0, 1.0), (1.5, 0.0, 1.0), (5.0, 4.0, 0.2), (3.0, 2.999, 2.0)])
def test_two_agent_closed_form_against_adaptive_solver(xa0, xb0, xi):
    t = np.linspace(0, 8, 401)
    xa, xb = two_agent_closed_form(t, xa0, xb0, xi)
    ra, rb = oracles.h_system(xa0, xb0, xi, t)
    assert np.max(np.abs(xa - ra)) < 1e-6 and np.max(np.abs(xb - rb)) < 1e-6


def test_two_agent_reference_validates():
    ref = two_agent_reference(10.0, 0.0, 1.0, 10.0)
    assert ref.t_hat == pytest.approx(0.5 * np.log(9.0))
    assert ref.xa[-1] == pytest.approx(ref.limit, abs=1e-6)
    with pytest.raises(ValueError):
        two_agent_reference(0.0, 1.0, 1.0, 5.0)


def test_two_agent_scenario_is_complete_graph():
    sc = two_agent_scenario(3.0, 0.0, 1.0, 2.0)
    assert sc.allow_complete
