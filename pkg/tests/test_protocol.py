import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from epsconsensus.protocol import control, field, lazy_sum, measurements, sign_consistency
from epsconsensus.topology import chain, ring, star
from oracles import lazy_field_bruteforce


def test_lazy_sum_deadband_cases():
    # mean 1, xi 1: x inside [0, 2] keeps the agent still
    assert lazy_sum(1.5, {2: 0.0, 3: 2.0}, 1.0) == 3.0
    assert control(1.5, {2: 0.0, 3: 2.0}, 1.0).u == 0.0
    # x above the band: estimates pushed up by xi
    out = control(5.0, {2: 0.0, 3: 2.0}, 1.0)
    assert out.lazy_sum == 4.0 and out.u == -6.0
    out = control(-3.0, {2: 0.0, 3: 2.0}, 1.0)
    assert out.u == 6.0


def test_naive_mode():
    assert control(1.5, {2: 0.0, 3: 2.0}, 1.0, "naive").u == -1.0


def test_errors():
    with pytest.raises(ValueError):
        lazy_sum(0.0, {}, 1.0)
    with pytest.raises(ValueError):
        control(0.0, {2: 1.0}, 1.0, "greedy")


def test_measurement_convention():
    x = np.array([1.0, 2.0, 3.0])
    d = np.zeros((3, 3))
    d[1, 0], d[1, 2] = 0.25, -0.5
    assert measurements(x, d, chain(3), 1, 2) == {1: 1.25, 3: 2.5}


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 31), st.sampled_from(["chain", "star", "ring"]), st.floats(0.1, 3.0))
def test_vectorized_field_matches_bruteforce(seed, fam, xi):
    rng = np.random.default_rng(seed)
    topo = {"chain": chain(6), "star": star(5), "ring": ring(5)}[fam]
    n = topo.n
    x = rng.normal(scale=5, size=n)
    d = rng.uniform(-xi, xi, size=(n, n))
    np.fill_diagonal(d, 0)
    a = topo.adjacency(1)
    u = field(x, a, a.sum(axis=1), (a * d).sum(axis=1), xi)
    assert np.allclose(u, lazy_field_bruteforce(x, d, a, xi), atol=1e-9)
    for i in range(1, n + 1):
        c = control(float(x[i - 1]), measurements(x, d, topo, 1, i), xi)
        assert c.u == pytest.approx(u[i - 1], abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0.1, 3.0))
def test_sign_property(seed, xi):
    rng = np.random.default_rng(seed)
    for topo in (chain(6), star(5), ring(5)):
        n = topo.n
        x = rng.normal(scale=3, size=n)
        d = rng.uniform(-xi, xi, size=(n, n))
        assert all(sign_consistency(x, d, topo, 1, xi))
