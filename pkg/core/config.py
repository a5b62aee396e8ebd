"""
Typed run configuration.

Values are resolved defaults < JSON config file < command-line flags, then
validated by pydantic. Any violation surfaces as ConfigError.
"""
import hashlib
import json
import os
from pathlib import Path
from typing import Literal, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from core.errors import ConfigError

# ── environment ───────────────────────────────────────────────────────────────
OUTPUT_DIR_ENV = "CSCD_OUTPUT_DIR"
LOG_LEVEL_ENV = "CSCD_LOG_LEVEL"


def default_output_dir() -> Path:
    return Path(os.getenv(OUTPUT_DIR_ENV, "runs"))


def default_log_level() -> str:
    return os.getenv(LOG_LEVEL_ENV, "INFO").upper()


# ── models ────────────────────────────────────────────────────────────────────
Ablation = Literal["K", "R", "K+R"]


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    model: Literal["cscd", "irt"] = "cscd"
    dim: int = Field(32, ge=1)
    layers: int = Field(1, ge=0)
    hidden1: int = Field(512, ge=1)
    hidden2: int = Field(256, ge=1)
    batch_size: Literal[8, 16, 32, 64] = 32
    lr: float = Field(0.002, ge=0.0, le=2e-2)
    lr_decay: float = Field(1.0, gt=0.0, le=1.0)
    dropout: float = Field(0.2, ge=0.0, lt=0.5)
    max_epochs: int = Field(100, ge=1)
    patience: int = Field(10, ge=1)
    min_delta: float = Field(1e-5, ge=0.0)
    seed: int = 0
    ablation: Ablation = "K+R"
    monotone_head: bool = False
    leaky_slope: float = Field(0.2, gt=0.0, lt=1.0)
    ratio: tuple[int, int, int] = (7, 1, 2)

    @field_validator("ratio")
    @classmethod
    def _positive_ratio(cls, value):
        if any(part <= 0 for part in value):
            raise ValueError("split ratio components must be positive")
        return value

    def config_hash(self) -> str:
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class SyntheticSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    learners: int = Field(200, ge=1)
    exercises: int = Field(50, ge=1)
    concepts: int = Field(20, ge=2)
    d_true: int = Field(3, ge=1)
    prereq_prob: float = Field(0.1, ge=0.0, le=1.0)
    dep_prob: float = Field(0.05, ge=0.0, le=1.0)
    defect_rate: float = Field(0.3, ge=0.0, le=1.0)
    guess: float = Field(0.2, ge=0.0, le=1.0)
    slip: float = Field(0.1, ge=0.0, le=1.0)
    answer_rate: float = Field(0.5, gt=0.0, le=1.0)
    max_concepts_per_exercise: int = Field(4, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _guess_below_mastery(self):
        if self.guess > 1.0 - self.slip:
            raise ValueError("guess must not exceed 1 - slip")
        return self


# ── resolution ────────────────────────────────────────────────────────────────
Model = TypeVar("Model", bound=BaseModel)


def build(model: type[Model], /, **values) -> Model:
    try:
        return model(**values)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or model.__name__}: {err['msg']}"
            for err in e.errors()
        )
        raise ConfigError(f"invalid {model.__name__}: {problems}") from e


def resolve(model: type[Model], /, config_file: str | Path | None = None, **flags) -> Model:
    values: dict = {}
    if config_file is not None:
        path = Path(config_file)
        try:
            values.update(json.loads(path.read_text(encoding="utf-8")))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: not valid JSON ({e})") from e
    values.update({k: v for k, v in flags.items() if v is not None})
    return build(model, **values)
