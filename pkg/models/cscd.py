"""
The cognitive-structure diagnosis model.

A forward pass personalises concept and relation embeddings for the unique
learners of a batch, runs the prerequisite and dependency channels over the
batched learner graphs, fuses them into h^s, projects KS, and feeds the
Q-masked interaction through the prediction head.
"""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, replace

import numpy as np

from core.autodiff import Tensor, reshape, take_rows
from core.config import TrainConfig
from core.parameters import ParameterStore, ParamSpec
from models.base import ModelDims
from models.egat import CHANNELS, LineNeighborhood, egat_specs, run_channel
from models.embedding import embedding_specs, exercise_features, personalize
from models.fusion import (
    CognitiveDiagnosis,
    fuse_channel,
    fuse_final,
    fusion_specs,
    knowledge_states,
    project_states,
)
from models.prediction import clamp_monotone, head_specs, interaction, predict

logger = logging.getLogger(__name__)

HOOD_CACHE_SIZE = 8


@dataclass(frozen=True)
class ForwardPlan:
    use_edges: bool
    update_nodes: bool
    update_edges: bool
    equal_channels: bool = False


FORWARD_PLANS = {
    "K": ForwardPlan(use_edges=False, update_nodes=False, update_edges=False, equal_channels=True),
    "R": ForwardPlan(use_edges=True, update_nodes=False, update_edges=True),
    "K+R": ForwardPlan(use_edges=True, update_nodes=True, update_edges=True),
}


@dataclass
class CognitiveState:
    learners: np.ndarray
    hs: Tensor  # (U*K)×d
    ks: Tensor  # U×K
    edges: dict[str, Tensor]  # kind -> (U*E_kind)×d, absent in K mode


class CSCDModel:
    kind = "cscd"

    def __init__(self, graph, qmatrix, config: TrainConfig, learners: int, params: ParameterStore | None = None):
        self.graph = graph
        self.qmatrix = qmatrix
        self.config = config
        self.dims = ModelDims(
            learners=learners,
            exercises=qmatrix.exercise_count,
            concepts=graph.concept_count,
            prereq_edges=len(graph.prereq_edges),
            dep_edges=len(graph.dep_edges),
        )
        specs = self.parameter_specs(self.dims, config)
        if params is None:
            params = ParameterStore.initialize(specs, seed=config.seed)
        else:
            params.check_shapes(specs)
        self.params = params
        if config.monotone_head:
            clamp_monotone(self.params)

        self.plan = FORWARD_PLANS[config.ablation]
        if not (graph.prereq_edges or graph.dep_edges):
            # no relations to weigh: every mode reduces to the K-only fusion
            self.plan = replace(self.plan, equal_channels=True)
        self._hoods = {
            "prereq": LineNeighborhood.build(graph.concept_count, graph.prereq_edges, directed=True),
            "dep": LineNeighborhood.build(graph.concept_count, graph.dep_edges, directed=False),
        }
        self._batched = functools.lru_cache(maxsize=HOOD_CACHE_SIZE)(self._batch_hood)
        if self.plan.use_edges and config.layers:
            for kind in CHANNELS:
                if self._hoods[kind].edge_count == 0:
                    logger.warning("graph has no %s edges; that channel passes node features through", kind)

    @staticmethod
    def parameter_specs(dims: ModelDims, config: TrainConfig) -> list[ParamSpec]:
        d = config.dim
        specs = embedding_specs(dims, d)
        for kind in CHANNELS:
            specs += egat_specs(kind, d, config.layers)
        specs += fusion_specs(d, CHANNELS)
        specs += head_specs(dims.concepts, config.hidden1, config.hidden2)
        return specs

    def _batch_hood(self, kind: str, copies: int) -> LineNeighborhood:
        return self._hoods[kind].batched(copies)

    def hood(self, kind: str, copies: int = 1) -> LineNeighborhood:
        return self._batched(kind, copies)

    def _layers(self, kind: str) -> list[tuple[Tensor, Tensor]]:
        return [
            (self.params[f"alpha_{kind}_{t}"], self.params[f"beta_{kind}_{t}"])
            for t in range(self.config.layers)
        ]

    def cognitive_state(self, learners) -> CognitiveState:
        plan = self.plan
        state = personalize(self.params, learners, self.graph, with_edges=plan.use_edges)
        u = len(state.learners)

        channel: dict[str, Tensor] = {}
        edges: dict[str, Tensor] = {}
        for kind in CHANNELS:
            hood = self.hood(kind, u)
            h = state.concepts
            r = None
            if plan.use_edges:
                h, r = run_channel(
                    h,
                    state.edges(kind),
                    hood,
                    self._layers(kind),
                    slope=self.config.leaky_slope,
                    update_nodes=plan.update_nodes,
                    update_edges=plan.update_edges,
                    warn=False,
                )
                edges[kind] = r
            channel[kind] = fuse_channel(h, r, hood, self.params, kind)

        hs = fuse_final(channel["dep"], channel["prereq"], self.params, equal_weights=plan.equal_channels)
        ks = reshape(knowledge_states(hs, self.params), u, self.dims.concepts)
        return CognitiveState(state.learners, hs, ks, edges)

    def forward(self, learners, exercises, train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        learners = np.asarray(learners, dtype=np.intp).reshape(-1)
        unique, position = np.unique(learners, return_inverse=True)
        state = self.cognitive_state(unique)
        ks = take_rows(state.ks, position)
        h_diff, h_disc, q = exercise_features(self.params, exercises, self.qmatrix)
        x = interaction(ks, h_diff, h_disc, q)
        return predict(x, self.params, self.config.dropout, train, rng)

    def after_step(self) -> None:
        if self.config.monotone_head:
            clamp_monotone(self.params)

    def diagnose(self, learner_id: int) -> CognitiveDiagnosis:
        if not 0 <= learner_id < self.dims.learners:
            raise IndexError(f"learner {learner_id} outside [0, {self.dims.learners})")
        state = self.cognitive_state([learner_id])
        if not self.plan.use_edges:
            logger.warning("K-only model carries no relation state; KUS list is empty")
        endpoints = {"prereq": self.graph.prereq_edges, "dep": self.graph.dep_edges}
        return project_states(learner_id, state.hs, state.edges, endpoints, self.params)


def ablation_mode(mode: str, model: CSCDModel) -> CSCDModel:
    """Same parameters, forward pass rewired for the K, R or K+R variant."""
    if mode not in FORWARD_PLANS:
        raise ValueError(f"unknown ablation mode {mode!r}; expected one of {', '.join(FORWARD_PLANS)}")
    config = model.config.model_copy(update={"ablation": mode})
    return CSCDModel(model.graph, model.qmatrix, config, model.dims.learners, model.params)
