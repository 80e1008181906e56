import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pddp.confidence import ConfidenceSet, log_term, polytope_constraints, radius
from pddp.core import Policy, TransitionFn, occupancy_from
from pddp.environment import pricing_topology


@pytest.fixture
def topo():
    return pricing_topology(2, 2)


def test_radius_hand_value():
    # 2 sqrt(0.5 * 10 / 100) + 14 * 10 / (3 * 100)
    eps = radius(np.array([0.5]), np.array([101]), 10.0)
    assert eps[0] == pytest.approx(0.91388, abs=1e-5)
    assert eps[0] == pytest.approx(0.4472135955 + 0.4666666667, abs=1e-9)


@pytest.mark.parametrize("n, expect", [(0, 1.0), (1, 1.0), (2, 1.0), (3, 2.0)])
def test_radius_uses_max_one_denominator(n, expect):
    got = radius(np.array([0.0]), np.array([n]), 3.0)[0]
    assert got == pytest.approx(14.0 * 3.0 / (3.0 * expect))


def test_log_term(topo):
    assert log_term(topo, 1000, 0.01) == pytest.approx(math.log(1000 * 7 * 4 / 0.01))


@settings(max_examples=100, deadline=None)
@given(p=st.floats(0, 1), n=st.integers(0, 10**6), log_t=st.floats(0.1, 50))
def test_radius_monotone_in_count(p, n, log_t):
    a, b = radius(np.array([p]), np.array([n, n + 1]), log_t)
    assert b <= a


def test_vacuous_set(topo):
    conf = ConfidenceSet.vacuous(topo, 100, 0.01)
    assert conf.epoch == 1
    assert np.all(conf.eps == 1.0)
    assert np.allclose(topo.pair_sums(conf.p_bar), 1.0)
    assert np.all(conf.lo == 0.0)
    _, _, n_eq = conf.constraints
    # single-layer mass plus flow at x1..x5
    assert n_eq == 6


def test_from_counts(topo):
    n_sas = np.zeros(topo.n_edges)
    n_sas[topo.edge("x0", "main0", "x1")] = 3
    n_sas[topo.edge("x0", "main0", "x3")] = 1
    n_sa = topo.pair_sums(n_sas)
    conf = ConfidenceSet.from_counts(topo, n_sa, n_sas, epoch=4, horizon=1000, delta=0.01)
    e = topo.edge("x0", "main0", "x1")
    assert conf.p_bar[e] == 0.75
    assert conf.p_bar[topo.edge("x0", "main0", "x2")] == 0.0
    # unvisited rows fall back to uniform
    assert conf.p_bar[topo.edge("x0", "main1", "x2")] == pytest.approx(1 / 3)
    lt = log_term(topo, 1000, 0.01)
    assert conf.eps[e] == pytest.approx(2 * math.sqrt(0.75 * lt / 3) + 14 * lt / 9)
    assert np.allclose(topo.pair_sums(conf.p_bar), 1.0)


def test_contains(topo):
    P = TransitionFn(topo, topo.uniform_rows())
    conf = ConfidenceSet(topo, 2, topo.uniform_rows(), np.full(topo.n_edges, 0.01), 0.01, 10)
    assert conf.contains(P.prob)
    shifted = P.prob.copy()
    shifted[topo.edge("x0", "main0", "x1")] += 0.05
    assert not conf.contains(shifted)


def test_polytope_rows_accept_true_occupancy(topo, rng):
    p = rng.random(topo.n_edges) + 0.1
    p /= topo.pair_sums(p)[topo.edge_pair]
    P = TransitionFn(topo, p / topo.pair_sums(p)[topo.edge_pair])
    d = rng.random(topo.n_pairs) + 0.1
    pi = Policy(topo, d / topo.state_sums(d)[topo.pair_state])
    q = occupancy_from(P, pi).q
    A, b, n_eq = polytope_constraints(topo, P.prob, np.full(topo.n_edges, 0.02))
    assert np.allclose(A[:n_eq] @ q, b[:n_eq], atol=1e-12)
    assert np.all(A[n_eq:] @ q <= 1e-12)
    # a box that excludes P cuts q off
    A, b, n_eq = polytope_constraints(topo, np.clip(P.prob + 0.2, 0, 1), np.full(topo.n_edges, 0.01))
    assert np.any(A[n_eq:] @ q > 1e-6)


def test_polytope_skips_vacuous_faces(topo):
    A, _, n_eq = polytope_constraints(topo, topo.uniform_rows(), np.ones(topo.n_edges))
    assert A.shape[0] == n_eq
    A2, _, n_eq2 = polytope_constraints(topo)
    assert np.array_equal(A, A2) and n_eq == n_eq2
