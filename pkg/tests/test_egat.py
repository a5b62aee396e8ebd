import logging

import numpy as np
import pytest

from conftest import random_graph
from core.autodiff import Tensor, grad_check, total
from core.errors import EmptyNeighborhoodError
from core.parameters import ParameterStore
from models.egat import LineNeighborhood, edge_attention, egat_specs, node_attention, run_channel


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _leaky(x, slope=0.2):
    return np.where(x >= 0, x, slope * x)


def _softmax(x):
    e = np.exp(x - x.max())
    return e / e.sum()


@pytest.fixture
def path():
    # 0 -> 1 -> 2
    return LineNeighborhood.build(3, [(0, 1), (1, 2)], directed=True)


# ── neighbourhoods ────────────────────────────────────────────────────────────

def test_directed_neighbourhood_is_predecessors_plus_self(path):
    assert path.node_neighbors(0) == [0]
    assert path.node_neighbors(1) == [0, 1]
    assert path.node_neighbors(2) == [1, 2]


def test_undirected_neighbourhood_covers_both_ends():
    hood = LineNeighborhood.build(3, [(0, 2)], directed=False)
    assert sorted(hood.node_neighbors(0)) == [0, 2]
    assert sorted(hood.node_neighbors(2)) == [0, 2]
    assert hood.node_neighbors(1) == [1]


def test_line_neighbourhood_shares_an_endpoint(path):
    assert path.edge_neighbors(0) == [0, 1]
    assert path.edge_neighbors(1) == [0, 1]
    rows = np.flatnonzero((path.edge_dst == 0) & (path.edge_src == 1))
    assert path.shared_a[rows].tolist() == [1] and path.shared_b[rows].tolist() == [1]


def test_batched_offsets_copies(path):
    twice = path.batched(2)
    assert twice.node_count == 6 and twice.edge_count == 4
    assert twice.node_neighbors(4) == [3, 4]
    assert twice.edge_neighbors(2) == [2, 3]
    assert twice.node_edge[twice.node_dst == 3].tolist() == [-1]


# ── node block ────────────────────────────────────────────────────────────────

def test_node_attention_matches_direct_formula(path, rng):
    d = 3
    h, r = rng.normal(size=(3, d)), rng.normal(size=(2, d))
    alpha = rng.normal(size=(1, 3 * d))
    out, _ = node_attention(Tensor(h), Tensor(r), path, Tensor(alpha))

    scores = np.array(
        [
            _leaky(alpha[0] @ np.concatenate([h[2], h[1], r[1]])),
            _leaky(alpha[0] @ np.concatenate([h[2], h[2], np.zeros(d)])),
        ]
    )
    w = _softmax(scores)
    expected = _sigmoid(w[0] * h[1] + w[1] * h[2])
    assert np.abs(out.data[2] - expected).max() < 1e-12


def test_single_neighbour_gets_full_weight(path, rng):
    h = rng.normal(size=(3, 2))
    out, weights = node_attention(Tensor(h), Tensor(rng.normal(size=(2, 2))), path, Tensor(rng.normal(size=(1, 6))))
    assert weights.data[path.node_dst == 0, 0].tolist() == [1.0]
    assert np.abs(out.data[0] - _sigmoid(h[0])).max() < 1e-12


def test_node_weights_row_stochastic_on_random_graphs():
    rng = np.random.default_rng(50)
    for _ in range(50):
        k = int(rng.integers(2, 9))
        graph = random_graph(k, rng, 0.4, 0.3)
        for edges, directed in ((graph.prereq_edges, True), (graph.dep_edges, False)):
            if not edges:
                continue
            hood = LineNeighborhood.build(k, edges, directed)
            h, r = Tensor(rng.normal(size=(k, 4))), Tensor(rng.normal(size=(len(edges), 4)))
            _, a = node_attention(h, r, hood, Tensor(rng.normal(size=(1, 12))))
            _, b = edge_attention(r, h, hood, Tensor(rng.normal(size=(1, 12))))
            node_sums = np.bincount(hood.node_dst, weights=a.data[:, 0], minlength=k)
            edge_sums = np.bincount(hood.edge_dst, weights=b.data[:, 0], minlength=len(edges))
            assert np.abs(node_sums - 1.0).max() < 1e-12
            assert np.abs(edge_sums - 1.0).max() < 1e-12


def test_without_self_loops_a_source_has_no_neighbours(rng):
    hood = LineNeighborhood.build(3, [(0, 1), (1, 2)], directed=True, self_loops=False)
    with pytest.raises(EmptyNeighborhoodError):
        node_attention(Tensor(rng.normal(size=(3, 2))), Tensor(rng.normal(size=(2, 2))), hood, Tensor(np.ones((1, 6))))


# ── edge block ────────────────────────────────────────────────────────────────

def test_edge_attention_matches_direct_formula(path, rng):
    d = 2
    h, r = rng.normal(size=(3, d)), rng.normal(size=(2, d))
    beta = rng.normal(size=(1, 3 * d))
    out, _ = edge_attention(Tensor(r), Tensor(h), path, Tensor(beta))

    scores = np.array(
        [
            _leaky(beta[0] @ np.concatenate([r[0], r[0], (h[0] + h[1]) / 2])),
            _leaky(beta[0] @ np.concatenate([r[0], r[1], h[1]])),
        ]
    )
    w = _softmax(scores)
    expected = _sigmoid(w[0] * r[0] + w[1] * r[1])
    assert np.abs(out.data[0] - expected).max() < 1e-12


def test_dependency_shared_node_ignores_orientation(rng):
    h, r = rng.normal(size=(3, 2)), rng.normal(size=(2, 2))
    beta = Tensor(rng.normal(size=(1, 6)))
    a = LineNeighborhood.build(3, [(0, 1), (1, 2)], directed=False)
    b = LineNeighborhood.build(3, [(1, 0), (2, 1)], directed=False)
    out_a, _ = edge_attention(Tensor(r), Tensor(h), a, beta)
    out_b, _ = edge_attention(Tensor(r), Tensor(h), b, beta)
    assert np.abs(out_a.data - out_b.data).max() < 1e-15


# ── stacking ──────────────────────────────────────────────────────────────────

def test_zero_layers_is_identity(path, rng):
    h, r = Tensor(rng.normal(size=(3, 2))), Tensor(rng.normal(size=(2, 2)))
    out_h, out_r = run_channel(h, r, path, [])
    assert out_h is h and out_r is r


def test_edgeless_channel_passes_through(caplog, rng):
    hood = LineNeighborhood.build(3, [], directed=True)
    h, r = Tensor(rng.normal(size=(3, 2))), Tensor(np.zeros((0, 2)))
    with caplog.at_level(logging.WARNING):
        out_h, _ = run_channel(h, r, hood, [(Tensor(np.ones((1, 6))), Tensor(np.ones((1, 6))))])
    assert out_h is h
    assert "no edges" in caplog.text


def test_layers_are_not_idempotent(path, rng):
    h, r = Tensor(rng.normal(size=(3, 2))), Tensor(rng.normal(size=(2, 2)))
    layer = (Tensor(rng.normal(size=(1, 6))), Tensor(rng.normal(size=(1, 6))))
    once, _ = run_channel(h, r, path, [layer])
    twice, _ = run_channel(h, r, path, [layer, layer])
    assert np.abs(once.data - twice.data).max() > 1e-6


def test_frozen_blocks(path, rng):
    h, r = Tensor(rng.normal(size=(3, 2))), Tensor(rng.normal(size=(2, 2)))
    layer = (Tensor(rng.normal(size=(1, 6))), Tensor(rng.normal(size=(1, 6))))
    out_h, out_r = run_channel(h, r, path, [layer], update_nodes=False)
    assert out_h is h and out_r is not r
    out_h, out_r = run_channel(h, r, path, [layer], update_edges=False)
    assert out_r is r and out_h is not h


def test_channel_gradients(rng):
    hood = LineNeighborhood.build(4, [(0, 1), (1, 2), (0, 3)], directed=False)
    store = ParameterStore()
    store.add("h", rng.normal(size=(4, 3)))
    store.add("r", rng.normal(size=(3, 3)))
    for spec in egat_specs("dep", 3, 2):
        store.add(spec.name, rng.normal(size=spec.shape))

    def objective(s):
        layers = [(s[f"alpha_dep_{t}"], s[f"beta_dep_{t}"]) for t in range(2)]
        h, r = run_channel(s["h"], s["r"], hood, layers)
        return total(h) + total(r)

    assert grad_check(objective, store, eps=1e-5) < 1e-4
