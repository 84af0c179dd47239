import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ceas_sim.consensus import (
    FidelityStamp,
    aggregate,
    build_mixing_matrix,
    gossip_round,
    normalize_weights,
    optimal_inverse_variance_weights,
)
from ceas_sim.errors import ConnectivityError, ConsensusStall, DomainError, ShapeError


def _stamps(values):
    return [FidelityStamp(i, v) for i, v in enumerate(values)]


def test_stamp_value_composition():
    assert FidelityStamp(0, 0.8).value == 0.8
    assert FidelityStamp(0, 0.8, process_distance=0.5).value == pytest.approx(0.8 * np.exp(-0.5), abs=1e-15)
    with pytest.raises(DomainError):
        FidelityStamp(0, 0.0)


def test_normalize_examples():
    np.testing.assert_allclose(normalize_weights(_stamps([1, 1, 1])), [1 / 3] * 3, atol=1e-12)
    np.testing.assert_allclose(normalize_weights(_stamps([0.8, 0.2])), [0.8, 0.2], atol=1e-12)
    np.testing.assert_allclose(normalize_weights(_stamps([0.9, 0.9, 0.9]), {1}), [0.5, 0, 0.5], atol=1e-12)


def test_normalize_all_quarantined_stalls():
    with pytest.raises(ConsensusStall):
        normalize_weights(_stamps([0.5, 0.5]), {0, 1})


@given(
    phi=st.lists(st.floats(0.01, 1.0), min_size=1, max_size=12),
    data=st.data(),
)
@settings(max_examples=100, deadline=None)
def test_normalize_invariants(phi, data):
    q = data.draw(st.sets(st.integers(0, len(phi) - 1), max_size=len(phi) - 1))
    w = normalize_weights(np.array(phi), q)
    assert np.all(w >= 0)
    assert abs(w.sum() - 1) < 1e-9
    assert all(w[k] == 0 for k in q)


def test_aggregate_examples():
    g1, g2 = np.array([1.0, 2.0]), np.array([3.0, -1.0])
    np.testing.assert_array_equal(aggregate([g1, g2], np.array([1.0, 0.0])), g1)
    np.testing.assert_allclose(aggregate([g1, g1, g1], np.full(3, 1 / 3)), g1, atol=1e-15)
    np.testing.assert_allclose(aggregate([[1, 0], [0, 1]], np.array([0.8, 0.2])), [0.8, 0.2], atol=1e-15)
    with pytest.raises(ShapeError):
        aggregate([g1, g2], np.array([1.0]))


@given(
    g=st.lists(st.lists(st.floats(-10, 10), min_size=3, max_size=3), min_size=1, max_size=6),
    a=st.floats(-5, 5),
    b=st.floats(-5, 5),
    seed=st.integers(0, 100),
)
@settings(max_examples=100, deadline=None)
def test_aggregate_affine_equivariance(g, a, b, seed):
    g = np.array(g)
    w = np.random.default_rng(seed).random(len(g)) + 0.01
    w /= w.sum()
    np.testing.assert_allclose(aggregate(a * g + b, w), a * aggregate(g, w) + b, atol=1e-9)


def _grid_min_variance(traces, step=0.01):
    # Exhaustive search over the simplex grid, written independently of the package.
    k = len(traces)
    m = int(round(1 / step))
    best, best_w = np.inf, None
    for head in itertools.product(range(m + 1), repeat=k - 1):
        if sum(head) > m:
            continue
        w = np.array(list(head) + [m - sum(head)]) / m
        v = float(np.sum(w**2 * traces))
        if v < best:
            best, best_w = v, w
    return best, best_w


@pytest.mark.parametrize("traces,expected", [((1, 4), (0.8, 0.2)), ((1, 1, 2), (0.4, 0.4, 0.2))])
def test_inverse_variance_matches_grid_oracle(traces, expected):
    _, w_grid = _grid_min_variance(np.array(traces, dtype=float))
    np.testing.assert_allclose(w_grid, expected, atol=1e-12)
    np.testing.assert_allclose(optimal_inverse_variance_weights(traces), expected, atol=1e-12)


def test_inverse_variance_equal_and_invalid():
    np.testing.assert_allclose(optimal_inverse_variance_weights([2, 2, 2, 2]), [0.25] * 4, atol=1e-15)
    with pytest.raises(DomainError):
        optimal_inverse_variance_weights([1, 0])


def test_mixing_complete_graph_uniform():
    w = build_mixing_matrix(nx.complete_graph(3), _stamps([1, 1, 1]))
    np.testing.assert_allclose(w, np.full((3, 3), 1 / 3), atol=1e-15)


def test_mixing_quarantined_column():
    g = nx.complete_graph(4)
    w = build_mixing_matrix(g, _stamps([1, 1, 1, 1]), {2})
    assert w[2, 2] == 1.0
    assert np.all(np.delete(w[:, 2], 2) == 0)
    assert np.all(np.delete(w[2], 2) == 0)


def test_mixing_disconnected_raises():
    g = nx.Graph([(0, 1), (2, 3)])
    with pytest.raises(ConnectivityError):
        build_mixing_matrix(g, np.ones(4))
    # Quarantining the bridge node disconnects the rest.
    with pytest.raises(ConnectivityError):
        build_mixing_matrix(nx.path_graph(3), np.ones(3), {1})


@given(n=st.integers(2, 12), p=st.floats(0.2, 1.0), seed=st.integers(0, 500), data=st.data())
@settings(max_examples=100, deadline=None)
def test_mixing_invariants(n, p, seed, data):
    g = nx.gnp_random_graph(n, p, seed=seed)
    phi = np.array(data.draw(st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n)))
    w = build_mixing_matrix(g, phi, require_connected=False)
    assert np.all(w >= 0)
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-9)
    adj = nx.to_numpy_array(g, nodelist=range(n)) + np.eye(n)
    assert np.all(w[adj == 0] == 0)


def test_uniform_symmetric_is_doubly_stochastic():
    g = nx.random_regular_graph(3, 10, seed=2)
    w = build_mixing_matrix(g, np.ones(10))
    np.testing.assert_allclose(w, w.T, atol=1e-15)
    np.testing.assert_allclose(w.sum(axis=0), 1.0, atol=1e-12)


def test_two_node_gossip():
    out = gossip_round(np.array([[0.0], [2.0]]), nx.path_graph(2), np.ones(2), depth=1)
    np.testing.assert_allclose(out, [[1.0], [1.0]], atol=1e-15)


def test_sparse_graph_converges_eventually():
    # Long paths mix slowly but still reach the mean.
    x = np.random.default_rng(0).normal(size=(10, 3))
    out = gossip_round(x, nx.path_graph(10), np.ones(10), depth=2000)
    assert np.abs(out - x.mean(axis=0)).max() < 1e-6


def test_missing_pairs_drop_edges():
    x = np.array([[0.0], [2.0], [4.0]])
    g = nx.path_graph(3)
    masks = np.array([[True, False]])  # edge (0,1) alive, edge (1,2) lacks a pair
    out = gossip_round(x, g, np.ones(3), depth=1, edge_masks=masks)
    np.testing.assert_allclose(out[:, 0], [1.0, 1.0, 4.0], atol=1e-15)


def test_isolated_nodes_pass_through():
    x = np.array([[1.0], [5.0]])
    out = gossip_round(x, nx.path_graph(2), np.ones(2), depth=3, edge_masks=np.zeros((3, 1), dtype=bool))
    np.testing.assert_array_equal(out, x)


def test_gossip_depth_validation():
    with pytest.raises(DomainError):
        gossip_round(np.zeros((2, 1)), nx.path_graph(2), np.ones(2), depth=0)
