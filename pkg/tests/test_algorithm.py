import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aggdefense.algorithm import AgentState, init_agent, mix, optimize_step
from aggdefense.constraints import FeasibleBox, FieldBox, build_box
from aggdefense.metrics import GlobalProblem, centralized_oracle
from aggdefense.network import CommGraph, Mailbox, ProtocolError, exchange, metropolis_weights
from aggdefense.objectives import CostGains, CostSnapshot, grad2_cost

BIG = FeasibleBox(np.full(3, -1e6), np.full(3, 1e6))


def _random_graph(rng, n, p):
    return metropolis_weights(CommGraph.from_edges(n, [e for e in itertools.combinations(range(n), 2) if rng.random() < p]))


def _round(agents, graph, snaps, boxes, strict=False):
    boxes_in = exchange(graph, [(a.s, a.y) for a in agents])
    return [optimize_step(a, boxes_in[a.agent_id], graph.weights[a.agent_id], snaps[a.agent_id], boxes[a.agent_id], strict)
            for a in agents]


def _snap(rng, scale=3.0):
    return CostSnapshot(rng.uniform(-scale, scale, 3), rng.uniform(-scale, scale, 3))


@given(st.integers(0, 2**32 - 1), st.integers(2, 6), st.sampled_from(["surveillance", "basketball"]))
@settings(max_examples=40, deadline=None)
def test_tracker_sums_conserved(seed, n, mode):
    rng = np.random.default_rng(seed)
    gains = [CostGains.scalar(rng.uniform(1, 5), rng.uniform(0.5, 5), rng.uniform(0, 2), barrier=False) for _ in range(n)]
    agents = [init_agent(i, rng.uniform(-2, 2, 3), BIG, _snap(rng), gains[i], alpha=0.05, delta=0.5, mode=mode)
              for i in range(n)]
    for _ in range(30):
        snaps = [_snap(rng) for _ in range(n)]  # references move every round
        boxes = [FeasibleBox(-rng.uniform(0.5, 3, 3), rng.uniform(0.5, 3, 3)) for _ in range(n)]
        agents = _round(agents, _random_graph(rng, n, 0.5), snaps, boxes)
        X = np.array([a.x for a in agents])
        S = np.array([a.s for a in agents])
        Y = np.array([a.y for a in agents])
        g2 = np.array([grad2_cost(a.x, a.s, a.snapshot, a.gains, mode) for a in agents])
        assert np.abs(S.mean(axis=0) - X.mean(axis=0)).max() <= 1e-10
        assert np.linalg.norm(Y.sum(axis=0) - g2.sum(axis=0)) <= 1e-9


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_iterates_stay_in_fixed_box(seed):
    rng = np.random.default_rng(seed)
    n = 3
    field = FieldBox.unbounded()
    boxes = [build_box(rng.uniform(-5, 5, 3), rng.uniform(-5, 5, 3), 0.01, 0.1, field) for _ in range(n)]
    snaps = [_snap(rng, 6) for _ in range(n)]
    gains = [CostGains.scalar(2, 1, 0.5) for _ in range(n)]
    agents = [init_agent(i, rng.uniform(-5, 5, 3), boxes[i], snaps[i], gains[i], alpha=0.1) for i in range(n)]
    for _ in range(50):
        agents = _round(agents, _random_graph(rng, n, 0.7), snaps, boxes)
        for a in agents:
            assert boxes[a.agent_id].contains(a.x_tilde)
            assert boxes[a.agent_id].contains(a.x)


def test_optimum_is_a_fixed_point():
    rng = np.random.default_rng(3)
    n = 3
    graph = metropolis_weights(CommGraph.from_edges(n, [(0, 1), (1, 2)]))
    gains = [CostGains.scalar(3, 2, 1, barrier=False) for _ in range(n)]
    snaps = [_snap(rng) for _ in range(n)]
    boxes = [FeasibleBox(-np.ones(3), np.ones(3)) for _ in range(n)]
    opt = centralized_oracle(GlobalProblem(snaps, gains, boxes, graph), np.zeros((n, 3)), tol=1e-14)
    X = opt.x
    sig = X.mean(axis=0)
    ybar = np.mean([grad2_cost(X[i], sig, snaps[i], gains[i]) for i in range(n)], axis=0)
    agents = [AgentState(i, X[i], sig, ybar, gains[i], snaps[i], boxes[i], alpha=0.1) for i in range(n)]
    after = _round(agents, graph, snaps, boxes)
    for a, b in zip(agents, after):
        np.testing.assert_allclose(b.x, a.x, atol=1e-9)
        np.testing.assert_allclose(b.s, a.s, atol=1e-12)
        np.testing.assert_allclose(b.y, a.y, atol=1e-9)


def test_step_by_hand():
    gains = CostGains.scalar(1.0, 1.0, 0.0, barrier=False)
    snap = CostSnapshot([1.0, 0, 0], [0.0, 0, 0])
    a = AgentState(0, np.zeros(3), np.zeros(3), np.zeros(3), gains, snap, BIG, alpha=0.25, delta=0.5)
    g = CommGraph(1, frozenset(), np.ones((1, 1)))
    b = optimize_step(a, exchange(g, [(a.s, a.y)])[0], g.weights[0], snap, BIG)
    # grad1 = 2(x - p) = (-2, 0, 0); x_tilde = 0.5 e1; x = 0.25 e1; s follows x; y = 2 (s - b)
    np.testing.assert_allclose(b.x_tilde, [0.5, 0, 0])
    np.testing.assert_allclose(b.x, [0.25, 0, 0])
    np.testing.assert_allclose(b.s, [0.25, 0, 0])
    np.testing.assert_allclose(b.y, [0.5, 0, 0])


def test_strict_box_projects_on_previous_set():
    gains = CostGains.scalar(1.0, 1.0, 0.0, barrier=False)
    snap = CostSnapshot([10.0, 0, 0], [0.0, 0, 0])
    old = FeasibleBox(np.zeros(3), np.ones(3))
    new = FeasibleBox(np.zeros(3), 2 * np.ones(3))
    a = init_agent(0, np.zeros(3), old, snap, gains, alpha=1.0, delta=1.0)
    g = CommGraph(1, frozenset(), np.ones((1, 1)))
    mb = exchange(g, [(a.s, a.y)])[0]
    assert optimize_step(a, mb, g.weights[0], snap, new).x[0] == 2.0
    strict = optimize_step(a, mb, g.weights[0], snap, new, strict_box=True)
    assert strict.x[0] == 1.0 and strict.box is new


def test_mix_requires_every_weighted_neighbor():
    with pytest.raises(ProtocolError):
        mix(Mailbox(0, []), np.array([0.5, 0.5]))


def test_state_validation():
    gains = CostGains.scalar(1, 1, 1)
    snap = CostSnapshot(np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        AgentState(0, np.zeros(3), np.zeros(3), np.zeros(3), gains, snap, BIG, alpha=0.0)
    with pytest.raises(ValueError):
        AgentState(0, np.zeros(3), np.zeros(3), np.zeros(3), gains, snap, BIG, delta=1.5)
