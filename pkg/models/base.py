from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Protocol

import numpy as np

from core.autodiff import Tensor, matmul, take_rows, transpose
from core.parameters import ParameterStore, ParamSpec


@dataclass(frozen=True)
class ModelDims:
    learners: int
    exercises: int
    concepts: int
    prereq_edges: int
    dep_edges: int

    @classmethod
    def from_dataset(cls, dataset) -> "ModelDims":
        return cls(
            learners=dataset.stats.learners,
            exercises=dataset.qmatrix.exercise_count,
            concepts=dataset.graph.concept_count,
            prereq_edges=len(dataset.graph.prereq_edges),
            dep_edges=len(dataset.graph.dep_edges),
        )

    def to_dict(self) -> dict:
        return asdict(self)


class DiagnosisModel(Protocol):
    """What the trainer, checkpoints and CLI need from a response model."""

    kind: str
    config: object
    params: ParameterStore
    dims: ModelDims

    @staticmethod
    def parameter_specs(dims: ModelDims, config) -> list[ParamSpec]: ...

    def forward(self, learners, exercises, train: bool = False, rng=None) -> Tensor: ...

    def after_step(self) -> None: ...


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x · Wᵀ + b for a weight stored out×in."""
    out = matmul(x, transpose(weight))
    return out if bias is None else out + bias


def lookup(weight: Tensor, index, bias: Tensor | None = None) -> Tensor:
    """Rows of W·onehot(i) + b for each i, computed by column selection."""
    out = take_rows(transpose(weight), np.asarray(index, dtype=np.intp))
    return out if bias is None else out + bias
