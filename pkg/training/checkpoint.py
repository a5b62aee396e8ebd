"""
Versioned JSON checkpoints.

A checkpoint carries the resolved config and its hash, the model dimensions,
the fingerprint of the graph and Q-matrix it was trained on, the best epoch
and score, and every parameter array as shape plus flat values. Floats are
written with repr precision, so a reload reproduces predictions exactly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from core.config import TrainConfig, build
from core.errors import CheckpointError
from core.parameters import ParameterStore
from core.utils import write_json_atomic
from models.base import ModelDims

CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    config: TrainConfig
    dims: ModelDims
    fingerprint: str
    epoch: int
    best_score: float
    monitor: str
    params: ParameterStore
    dataset: str = "dataset"

    @property
    def model(self) -> str:
        return self.config.model

    def to_dict(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "model": self.model,
            "dataset": self.dataset,
            "config": self.config.model_dump(mode="json"),
            "config_hash": self.config.config_hash(),
            "dims": self.dims.to_dict(),
            "fingerprint": self.fingerprint,
            "epoch": self.epoch,
            "best_score": self.best_score,
            "monitor": self.monitor,
            "params": self.params.to_dict(),
        }

    def save(self, path) -> Path:
        return write_json_atomic(path, self.to_dict())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"checkpoint not found: {path}")
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise CheckpointError(f"{path}: not a valid checkpoint ({e})") from e

        if payload.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {payload.get('version')!r}")
        try:
            config = build(TrainConfig, **payload["config"])
            if config.config_hash() != payload["config_hash"]:
                raise CheckpointError(f"{path}: config hash does not match its config")
            return cls(
                config=config,
                dims=ModelDims(**payload["dims"]),
                fingerprint=payload["fingerprint"],
                epoch=int(payload["epoch"]),
                best_score=float(payload["best_score"]),
                monitor=payload["monitor"],
                params=ParameterStore.from_dict(payload["params"]),
                dataset=payload.get("dataset", "dataset"),
            )
        except (KeyError, TypeError) as e:
            raise CheckpointError(f"{path}: malformed checkpoint ({e})") from e

    def check_dataset(self, dataset) -> None:
        dims = ModelDims.from_dataset(dataset)
        if dims != self.dims:
            raise CheckpointError(f"checkpoint dims {self.dims.to_dict()} do not match dataset {dims.to_dict()}")
        if dataset.fingerprint() != self.fingerprint:
            raise CheckpointError("checkpoint was trained on a different concept graph or Q-matrix")
