"""
Dense embeddings of concepts, relations, learners and exercises.

Every one-hot product W · onehot(i) is realised as column selection of W.
Personalised states are laid out learner-major: row u*K + k holds concept k
for the u-th requested learner, row u*E + e holds edge e.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from core.autodiff import Tensor, concat, sigmoid, take_rows
from core.parameters import ParameterStore, ParamSpec
from models.base import ModelDims, linear, lookup


def embedding_specs(dims: ModelDims, d: int) -> list[ParamSpec]:
    edges = dims.prereq_edges + dims.dep_edges
    return [
        ParamSpec("W_k", (d, dims.concepts)),
        ParamSpec("b_k", (1, d), "bias"),
        ParamSpec("W_r", (d, edges)),
        ParamSpec("b_r", (1, d), "bias"),
        ParamSpec("W_s", (d, dims.learners)),
        ParamSpec("b_s", (1, d), "bias"),
        ParamSpec("W_sk", (d, 2 * d)),
        ParamSpec("b_sk", (1, d), "bias"),
        ParamSpec("W_sr", (d, 2 * d)),
        ParamSpec("b_sr", (1, d), "bias"),
        ParamSpec("W_diff", (dims.concepts, dims.exercises)),
        ParamSpec("b_diff", (1, dims.concepts), "bias"),
        ParamSpec("W_disc", (1, dims.exercises)),
        ParamSpec("b_disc", (1, 1), "bias"),
    ]


@dataclass
class PersonalizedGraphState:
    learners: np.ndarray
    concepts: Tensor  # (U*K)×d
    prereq: Tensor | None  # (U*P)×d
    dep: Tensor | None  # (U*D)×d

    def edges(self, kind: str) -> Tensor | None:
        return self.prereq if kind == "prereq" else self.dep


def _learners(params: ParameterStore, learners) -> tuple[np.ndarray, Tensor]:
    ids = np.asarray(learners, dtype=np.intp).reshape(-1)
    total = params["W_s"].shape[1]
    if ids.size and (ids.min() < 0 or ids.max() >= total):
        raise IndexError(f"learner id outside [0, {total})")
    return ids, sigmoid(lookup(params["W_s"], ids, params["b_s"]))


def _pair_with_learners(h_n: Tensor, items: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    u, count = h_n.shape[0], items.shape[0]
    pairs = concat(
        [
            take_rows(h_n, np.repeat(np.arange(u), count)),
            take_rows(items, np.tile(np.arange(count), u)),
        ]
    )
    return sigmoid(linear(pairs, weight, bias))


def _concepts(params: ParameterStore, h_n: Tensor) -> Tensor:
    k = params["W_k"].shape[1]
    h_k = sigmoid(lookup(params["W_k"], np.arange(k), params["b_k"]))
    return _pair_with_learners(h_n, h_k, params["W_sk"], params["b_sk"])


def _relations(params: ParameterStore, h_n: Tensor, prereq_count: int) -> tuple[Tensor, Tensor]:
    total = params["W_r"].shape[1]
    h_r = sigmoid(lookup(params["W_r"], np.arange(total), params["b_r"]))
    prereq = _pair_with_learners(
        h_n, take_rows(h_r, np.arange(prereq_count)), params["W_sr"], params["b_sr"]
    )
    dep = _pair_with_learners(
        h_n, take_rows(h_r, np.arange(prereq_count, total)), params["W_sr"], params["b_sr"]
    )
    return prereq, dep


def embed_concepts(params: ParameterStore, learners) -> Tensor:
    """h_{n,k} = sigmoid(W_sk [h_n ⊕ h_k] + b_sk) for every requested learner and concept."""
    _, h_n = _learners(params, learners)
    return _concepts(params, h_n)


def embed_relations(params: ParameterStore, learners, graph) -> tuple[Tensor, Tensor]:
    """Personalised prerequisite and dependency edge vectors, in graph edge order."""
    if params["W_r"].shape[1] != graph.edge_count:
        raise ValueError(
            f"relation embedding has {params['W_r'].shape[1]} slots for {graph.edge_count} edges"
        )
    _, h_n = _learners(params, learners)
    return _relations(params, h_n, len(graph.prereq_edges))


def personalize(params: ParameterStore, learners, graph, with_edges: bool = True) -> PersonalizedGraphState:
    ids, h_n = _learners(params, learners)
    concepts = _concepts(params, h_n)
    if not with_edges:
        return PersonalizedGraphState(ids, concepts, None, None)
    prereq, dep = _relations(params, h_n, len(graph.prereq_edges))
    return PersonalizedGraphState(ids, concepts, prereq, dep)


def exercise_features(params: ParameterStore, exercises, qmatrix) -> tuple[Tensor, Tensor, Tensor]:
    """(h_diff B×K, h_disc B×1, Q_e B×K) for a batch of exercise ids."""
    ids = np.asarray(exercises, dtype=np.intp).reshape(-1)
    total = params["W_diff"].shape[1]
    if ids.size and (ids.min() < 0 or ids.max() >= total):
        raise IndexError(f"exercise id outside [0, {total})")
    h_diff = sigmoid(lookup(params["W_diff"], ids, params["b_diff"]))
    h_disc = sigmoid(lookup(params["W_disc"], ids, params["b_disc"]))
    return h_diff, h_disc, Tensor(qmatrix.rows(ids))
