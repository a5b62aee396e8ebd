"""Two-parameter logistic IRT baseline: ŷ = sigmoid(a_e (θ_s − b_e))."""
from __future__ import annotations

import numpy as np

from core.autodiff import Tensor, mul, sigmoid
from core.config import TrainConfig
from core.parameters import ParameterStore, ParamSpec
from models.base import ModelDims, lookup


class IRTModel:
    kind = "irt"

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

    @staticmethod
    def parameter_specs(dims: ModelDims, config: TrainConfig) -> list[ParamSpec]:
        return [
            ParamSpec("theta", (1, dims.learners)),
            ParamSpec("a", (1, dims.exercises)),
            ParamSpec("b", (1, dims.exercises)),
        ]

    def forward(self, learners, exercises, train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        learners = np.asarray(learners, dtype=np.intp).reshape(-1)
        exercises = np.asarray(exercises, dtype=np.intp).reshape(-1)
        for ids, total, what in ((learners, self.dims.learners, "learner"), (exercises, self.dims.exercises, "exercise")):
            if ids.size and (ids.min() < 0 or ids.max() >= total):
                raise IndexError(f"{what} id outside [0, {total})")
        theta = lookup(self.params["theta"], learners)
        a = lookup(self.params["a"], exercises)
        b = lookup(self.params["b"], exercises)
        return sigmoid(mul(a, theta - b))

    def after_step(self) -> None:
        pass

