import numpy as np
import pytest
from hypothesis import given, strategies as st

from stochround.jms import (GreedyState, UflSubinstance, _apply, brute_force_ufl, jms_run, jms_solve, next_event,
                            ufl_lp_breakdown)


def random_ufl(seed: int, nf: int, nd: int) -> UflSubinstance:
    rng = np.random.default_rng(seed)
    fac, cli = rng.random((nf, 2)), rng.random((nd, 2))
    dist = np.linalg.norm(fac[:, None, :] - cli[None, :, :], axis=2)
    return UflSubinstance(rng.uniform(0.1, 1.5, nf), dist, rng.uniform(0.5, 2.0, nd))


def test_one_client_two_facilities():
    sub = UflSubinstance(np.array([5.0, 1.0]), np.array([[0.0], [2.0]]), np.array([1.0]))
    opened, phi, cost = jms_solve(sub)
    assert opened == [1] and phi.tolist() == [1]
    assert cost == 3.0
    assert brute_force_ufl(sub)[1] == 3.0
    assert jms_run(sub).history[0] == (3.0, "open", 1)


def test_single_facility():
    sub = UflSubinstance(np.array([2.0]), np.array([[1.5]]), np.array([1.0]))
    assert jms_solve(sub)[2] == pytest.approx(3.5)


def test_event_times():
    state = GreedyState(UflSubinstance(np.array([2.0]), np.array([[1.0]]), np.array([1.0])))
    assert next_event(state) == (3.0, "open", 0)
    state = GreedyState(UflSubinstance(np.array([2.0]), np.array([[1.0, 1.0]]), np.array([1.0, 1.0])))
    assert next_event(state)[0] == pytest.approx(2.0)


def test_tie_opens_lower_index():
    sub = UflSubinstance(np.array([1.0, 1.0]), np.array([[1.0], [1.0]]), np.array([1.0]))
    opened, _, _ = jms_solve(sub)
    assert opened == [0]


def test_demand_as_copies():
    # demand 2 behaves like two co-located unit clients
    a = UflSubinstance(np.array([3.0, 1.0]), np.array([[0.2, 1.0], [1.0, 0.3]]), np.array([2.0, 1.0]))
    b = UflSubinstance(np.array([3.0, 1.0]), np.array([[0.2, 0.2, 1.0], [1.0, 1.0, 0.3]]), np.array([1.0, 1.0, 1.0]))
    assert jms_solve(a)[2] == pytest.approx(jms_solve(b)[2])


def test_bad_subinstance():
    with pytest.raises(ValueError):
        UflSubinstance(np.array([1.0]), np.array([[1.0]]), np.array([0.0]))


@given(seed=st.integers(0, 2**31), nf=st.integers(1, 6), nd=st.integers(1, 8))
def test_feasible_monotone_and_bounded(seed, nf, nd):
    sub = random_ufl(seed, nf, nd)
    state = GreedyState(sub)
    best = np.full(nd, np.inf)
    while not state.done:
        _apply(state, next_event(state))
        conn = state.phi >= 0
        cur = np.where(conn, sub.distances[np.maximum(state.phi, 0), np.arange(nd)], np.inf)
        assert np.all(cur[conn] <= best[conn] + 1e-12)
        best = np.minimum(best, cur)
    assert np.all(state.is_open[state.phi])
    opened, phi, cost = jms_solve(sub)
    opt = brute_force_ufl(sub)[1]
    fstar, cstar = ufl_lp_breakdown(sub)
    assert cost >= opt - 1e-9
    assert cost <= 1.61 * opt + 1e-9
    assert cost <= 1.11 * fstar + 1.78 * cstar + 1e-6
