"""
Edge-featured graph attention over a concept graph.

One EGAT layer runs a node block and an edge block side by side; both read
the layer's input features and emit the next layer's. The directed channel
(prerequisites) lets every concept attend over its predecessors, the
undirected channel (dependencies) over all dependency neighbours. Every node
also attends to itself through a zero edge feature, and every edge to itself.

The feature of the node shared by edges p and q is the mean of their common
endpoints (two of them for p itself or for antiparallel prerequisite pairs),
so it does not depend on how an undirected edge happens to be oriented.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from core.autodiff import (
    Tensor,
    concat,
    leaky_relu,
    mul,
    segment_softmax,
    segment_sum,
    sigmoid,
    take_rows,
)
from core.parameters import ParamSpec
from models.base import linear

logger = logging.getLogger(__name__)

SELF_EDGE = -1
CHANNELS = ("prereq", "dep")


@dataclass(frozen=True)
class LineNeighborhood:
    node_count: int
    edge_count: int
    endpoints: np.ndarray  # E×2, (src, dst) or canonical (min, max)
    directed: bool
    # node block: one row per (target, source, edge); SELF_EDGE marks the self loop
    node_dst: np.ndarray
    node_src: np.ndarray
    node_edge: np.ndarray
    # edge block: one row per (target edge p, neighbour edge q, shared nodes)
    edge_dst: np.ndarray
    edge_src: np.ndarray
    shared_a: np.ndarray
    shared_b: np.ndarray
    # fusion: edges feeding each concept
    incident_node: np.ndarray
    incident_edge: np.ndarray

    @classmethod
    def build(
        cls, node_count: int, edges, directed: bool, self_loops: bool = True
    ) -> "LineNeighborhood":
        endpoints = np.asarray(list(edges), dtype=np.intp).reshape(-1, 2)
        e = len(endpoints)

        node_dst, node_src, node_edge = [], [], []
        incident_node, incident_edge = [], []
        touching: list[list[int]] = [[] for _ in range(node_count)]
        for idx, (src, dst) in enumerate(endpoints):
            node_dst.append(dst)
            node_src.append(src)
            node_edge.append(idx)
            incident_node.append(dst)
            incident_edge.append(idx)
            if not directed:
                node_dst.append(src)
                node_src.append(dst)
                node_edge.append(idx)
                incident_node.append(src)
                incident_edge.append(idx)
            touching[src].append(idx)
            touching[dst].append(idx)
        if self_loops:
            node_dst.extend(range(node_count))
            node_src.extend(range(node_count))
            node_edge.extend([SELF_EDGE] * node_count)

        edge_dst, edge_src, shared_a, shared_b = [], [], [], []
        for p, (u, v) in enumerate(endpoints):
            for q in sorted(set(touching[u]) | set(touching[v])):
                if q == p and not self_loops:
                    continue
                common = sorted({int(u), int(v)} & {int(x) for x in endpoints[q]})
                edge_dst.append(p)
                edge_src.append(q)
                shared_a.append(common[0])
                shared_b.append(common[-1])

        def arr(values):
            return np.asarray(values, dtype=np.intp)

        return cls(
            node_count=node_count,
            edge_count=e,
            endpoints=endpoints,
            directed=directed,
            node_dst=arr(node_dst),
            node_src=arr(node_src),
            node_edge=arr(node_edge),
            edge_dst=arr(edge_dst),
            edge_src=arr(edge_src),
            shared_a=arr(shared_a),
            shared_b=arr(shared_b),
            incident_node=arr(incident_node),
            incident_edge=arr(incident_edge),
        )

    def batched(self, copies: int) -> "LineNeighborhood":
        """Disjoint union of `copies` graphs, laid out copy-major."""
        if copies == 1:
            return self
        k, e = self.node_count, self.edge_count

        def tile(values, step):
            return np.concatenate([values + i * step for i in range(copies)]) if copies else values[:0]

        node_edge = tile(self.node_edge, e)
        node_edge = np.where(np.tile(self.node_edge, copies) == SELF_EDGE, SELF_EDGE, node_edge)
        return LineNeighborhood(
            node_count=k * copies,
            edge_count=e * copies,
            endpoints=np.concatenate([self.endpoints + i * k for i in range(copies)]).reshape(-1, 2)
            if copies
            else self.endpoints[:0],
            directed=self.directed,
            node_dst=tile(self.node_dst, k),
            node_src=tile(self.node_src, k),
            node_edge=node_edge,
            edge_dst=tile(self.edge_dst, e),
            edge_src=tile(self.edge_src, e),
            shared_a=tile(self.shared_a, k),
            shared_b=tile(self.shared_b, k),
            incident_node=tile(self.incident_node, k),
            incident_edge=tile(self.incident_edge, e),
        )

    def node_neighbors(self, node: int) -> list[int]:
        return [int(s) for s in self.node_src[self.node_dst == node]]

    def edge_neighbors(self, edge: int) -> list[int]:
        return [int(q) for q in self.edge_src[self.edge_dst == edge]]


def egat_specs(kind: str, d: int, layers: int) -> list[ParamSpec]:
    specs = []
    for t in range(layers):
        specs.append(ParamSpec(f"alpha_{kind}_{t}", (1, 3 * d)))
        specs.append(ParamSpec(f"beta_{kind}_{t}", (1, 3 * d)))
    return specs


def node_attention(
    h: Tensor, r: Tensor, hood: LineNeighborhood, alpha: Tensor, slope: float = 0.2
) -> tuple[Tensor, Tensor]:
    """Node block: a_{j→i} over N_i, then h'_i = sigmoid(Σ a_{j→i} h_j).

    Returns the updated node features and the per-pair attention column.
    """
    d = h.shape[1]
    padded = concat([r, Tensor(np.zeros((1, d)))], axis=0)
    edge_rows = np.where(hood.node_edge == SELF_EDGE, r.shape[0], hood.node_edge)
    features = concat(
        [take_rows(h, hood.node_dst), take_rows(h, hood.node_src), take_rows(padded, edge_rows)]
    )
    scores = leaky_relu(linear(features, alpha), slope)
    weights = segment_softmax(scores, hood.node_dst, hood.node_count)
    messages = take_rows(h, hood.node_src) * weights
    return sigmoid(segment_sum(messages, hood.node_dst, hood.node_count)), weights


def edge_attention(
    r: Tensor, h: Tensor, hood: LineNeighborhood, beta: Tensor, slope: float = 0.2
) -> tuple[Tensor, Tensor]:
    """Edge block: β_{q→p} over the line neighbourhood, then e'_p = sigmoid(Σ β_{q→p} r_q)."""
    shared = mul(take_rows(h, hood.shared_a) + take_rows(h, hood.shared_b), 0.5)
    features = concat([take_rows(r, hood.edge_dst), take_rows(r, hood.edge_src), shared])
    scores = leaky_relu(linear(features, beta), slope)
    weights = segment_softmax(scores, hood.edge_dst, hood.edge_count)
    messages = take_rows(r, hood.edge_src) * weights
    return sigmoid(segment_sum(messages, hood.edge_dst, hood.edge_count)), weights


def run_channel(
    h: Tensor,
    r: Tensor,
    hood: LineNeighborhood,
    layers: list[tuple[Tensor, Tensor]],
    slope: float = 0.2,
    update_nodes: bool = True,
    update_edges: bool = True,
    warn: bool = True,
) -> tuple[Tensor, Tensor]:
    """Stack of EGAT layers; `layers` holds one (alpha, beta) pair per layer."""
    if hood.edge_count == 0:
        if warn and layers:
            logger.warning("channel has no edges; node features pass through unchanged")
        return h, r
    for alpha, beta in layers:
        h_next = node_attention(h, r, hood, alpha, slope)[0] if update_nodes else h
        r_next = edge_attention(r, h, hood, beta, slope)[0] if update_edges else r
        h, r = h_next, r_next
    return h, r
