"""
Channel fusion and diagnostic projections.

Each channel first folds its updated edge features into the concepts they
touch (edge weight from a d→1 sigmoid MLP, plain weighted sum, no
normalisation), then mixes node and edge summary through an affine sigmoid.
The two channel vectors are scaled by per-concept channel weights and mixed
once more into the cognitive-structure state h^s. The K-only ablation uses
equal constant channel weights instead.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from core.autodiff import Tensor, concat, mul, segment_sum, sigmoid, take_rows
from core.parameters import ParameterStore, ParamSpec
from models.base import linear
from models.egat import LineNeighborhood

EQUAL_CHANNEL_WEIGHT = 0.5


def fusion_specs(d: int, kinds=("prereq", "dep")) -> list[ParamSpec]:
    specs = []
    for kind in kinds:
        specs += [
            ParamSpec(f"w_edge_{kind}", (1, d)),
            ParamSpec(f"c_edge_{kind}", (1, 1), "bias"),
            ParamSpec(f"W_fuse_{kind}", (d, 2 * d)),
            ParamSpec(f"b_fuse_{kind}", (1, d), "bias"),
            ParamSpec(f"w_chan_{kind}", (1, d)),
            ParamSpec(f"c_chan_{kind}", (1, 1), "bias"),
        ]
    specs += [
        ParamSpec("W_final", (d, 2 * d)),
        ParamSpec("b_final", (1, d), "bias"),
        ParamSpec("p_ks", (1, d)),
        ParamSpec("p_kus", (1, d)),
    ]
    return specs


def edge_weights(r: Tensor, params: ParameterStore, kind: str) -> Tensor:
    return sigmoid(linear(r, params[f"w_edge_{kind}"], params[f"c_edge_{kind}"]))


def incident_sum(r: Tensor | None, hood: LineNeighborhood, params: ParameterStore, kind: str) -> Tensor:
    """Σ_p ω_p · r_p over the edges feeding each concept; zero rows where none do."""
    d = params[f"W_fuse_{kind}"].shape[0]
    if r is None or hood.edge_count == 0:
        return Tensor(np.zeros((hood.node_count, d)))
    weighted = mul(r, edge_weights(r, params, kind))
    return segment_sum(take_rows(weighted, hood.incident_edge), hood.incident_node, hood.node_count)


def fuse_channel(
    h: Tensor, r: Tensor | None, hood: LineNeighborhood, params: ParameterStore, kind: str
) -> Tensor:
    summary = incident_sum(r, hood, params, kind)
    return sigmoid(linear(concat([h, summary]), params[f"W_fuse_{kind}"], params[f"b_fuse_{kind}"]))


def channel_weight(hs: Tensor, params: ParameterStore, kind: str) -> Tensor:
    return linear(hs, params[f"w_chan_{kind}"], params[f"c_chan_{kind}"])


def fuse_final(hs_dep: Tensor, hs_prereq: Tensor, params: ParameterStore, equal_weights: bool = False) -> Tensor:
    """h^s = sigmoid(W[ω↔ h↔ ⊕ ω→ h→] + b), one row per concept.

    With `equal_weights` both ω are the constant EQUAL_CHANNEL_WEIGHT and the
    channel-weight MLPs are not read.
    """
    if equal_weights:
        scaled_dep = mul(hs_dep, EQUAL_CHANNEL_WEIGHT)
        scaled_prereq = mul(hs_prereq, EQUAL_CHANNEL_WEIGHT)
    else:
        scaled_dep = mul(hs_dep, channel_weight(hs_dep, params, "dep"))
        scaled_prereq = mul(hs_prereq, channel_weight(hs_prereq, params, "prereq"))
    return sigmoid(linear(concat([scaled_dep, scaled_prereq]), params["W_final"], params["b_final"]))


def knowledge_states(hs: Tensor, params: ParameterStore) -> Tensor:
    return sigmoid(linear(hs, params["p_ks"]))


def structure_states(r: Tensor, params: ParameterStore) -> Tensor:
    return sigmoid(linear(r, params["p_kus"]))


@dataclass(frozen=True)
class EdgeScore:
    src: int
    dst: int
    kind: str
    score: float


@dataclass
class CognitiveDiagnosis:
    learner_id: int
    ks: np.ndarray
    kus: list[EdgeScore] = field(default_factory=list)

    def to_dict(self, labels: dict[int, str] | None = None) -> dict:
        labels = labels or {}
        return {
            "learner_id": int(self.learner_id),
            "ks": [
                {"concept_id": c, "name": labels.get(c, str(c)), "score": float(s)}
                for c, s in enumerate(self.ks)
            ],
            "kus": [
                {"src": e.src, "dst": e.dst, "kind": e.kind, "score": float(e.score)}
                for e in self.kus
            ],
        }

    def weakest_edges(self, count: int) -> list[EdgeScore]:
        return sorted(self.kus, key=lambda e: (e.score, e.kind, e.src, e.dst))[:count]


def project_states(
    learner_id: int,
    hs: Tensor,
    edges: dict[str, Tensor],
    endpoints: dict[str, tuple[tuple[int, int], ...]],
    params: ParameterStore,
) -> CognitiveDiagnosis:
    """KS per concept and KUS per edge for one learner's fused state."""
    ks = knowledge_states(hs, params).numpy()[:, 0]
    kus = []
    for kind in ("prereq", "dep"):
        r = edges.get(kind)
        if r is None or r.shape[0] == 0:
            continue
        scores = structure_states(r, params).numpy()[:, 0]
        kus += [EdgeScore(int(s), int(d), kind, float(v)) for (s, d), v in zip(endpoints[kind], scores)]
    return CognitiveDiagnosis(int(learner_id), ks, kus)
