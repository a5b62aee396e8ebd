"""
Exception hierarchy shared by every layer of the toolkit.

Validation problems subclass ValueError, numerical problems subclass
ArithmeticError; the CLI maps those families onto exit codes.
"""
from pathlib import Path


class DiagnosisError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(DiagnosisError, ValueError):
    def __init__(self, op: str, *shapes: tuple):
        self.op = op
        self.shapes = shapes
        listed = " and ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {listed}")


class NonFiniteError(DiagnosisError, ArithmeticError):
    pass


class TrainingDivergedError(NonFiniteError):
    def __init__(self, epoch: int, batch: int, value: float):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")


class EmptyNeighborhoodError(DiagnosisError, ValueError):
    pass


class ConfigError(DiagnosisError, ValueError):
    pass


class GraphError(DiagnosisError, ValueError):
    pass


class UndefinedMetricError(DiagnosisError, ValueError):
    pass


class CheckpointError(DiagnosisError, ValueError):
    pass


class DataLoadError(DiagnosisError, ValueError):
    def __init__(self, path, line: int | None, message: str):
        self.path = Path(path)
        self.line = line
        location = f"{self.path}:{line}" if line is not None else f"{self.path}"
        super().__init__(f"{location}: {message}")
