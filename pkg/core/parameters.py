from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from core.autodiff import DTYPE, Tensor
from core.errors import CheckpointError


@dataclass(frozen=True)
class ParamSpec:
    """Declared trainable array. Weights are stored out×in, biases as 1×out rows."""

    name: str
    shape: tuple[int, int]
    kind: str = "weight"  # "weight" (Xavier) or "bias" (zeros)


def xavier_uniform(shape: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    fan_out, fan_in = shape
    if fan_in + fan_out == 0:
        return np.zeros(shape, dtype=DTYPE)
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(DTYPE)


class ParameterStore:
    """Named trainable arrays with gradient slots, kept in declaration order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    @classmethod
    def initialize(cls, specs: list[ParamSpec], seed: int) -> "ParameterStore":
        rng = np.random.default_rng(seed)
        store = cls()
        for spec in specs:
            if spec.kind == "bias":
                values = np.zeros(spec.shape, dtype=DTYPE)
            else:
                values = xavier_uniform(spec.shape, rng)
            store.add(spec.name, values)
        return store

    def add(self, name: str, values) -> Tensor:
        if name in self._params:
            raise KeyError(f"parameter {name!r} already registered")
        param = Tensor(values, requires_grad=True, name=name)
        self._params[name] = param
        return param

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._params.items())

    def names(self) -> list[str]:
        return list(self._params)

    @property
    def size(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def zero_grad(self) -> None:
        for param in self._params.values():
            param.grad = None

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self._params.items()}

    def restore(self, snapshot: dict[str, np.ndarray]) -> None:
        for name, values in snapshot.items():
            self._params[name].data[...] = values

    def copy(self) -> "ParameterStore":
        clone = ParameterStore()
        for name, param in self._params.items():
            clone.add(name, param.data)
        return clone

    def check_shapes(self, specs: list[ParamSpec]) -> None:
        expected = {s.name: s.shape for s in specs}
        actual = {name: p.shape for name, p in self._params.items()}
        if expected != actual:
            missing = sorted(set(expected) ^ set(actual))
            wrong = sorted(n for n in set(expected) & set(actual) if expected[n] != actual[n])
            raise CheckpointError(
                f"parameter layout mismatch (missing/extra: {missing}, reshaped: {wrong})"
            )

    def to_dict(self) -> dict:
        return {
            name: {"shape": list(p.shape), "values": p.data.reshape(-1).tolist()}
            for name, p in self._params.items()
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ParameterStore":
        store = cls()
        for name, entry in payload.items():
            shape = tuple(entry["shape"])
            values = np.asarray(entry["values"], dtype=DTYPE)
            if values.size != shape[0] * shape[1]:
                raise CheckpointError(f"parameter {name!r}: {values.size} values for shape {shape}")
            store.add(name, values.reshape(shape))
        return store
