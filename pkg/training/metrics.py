"""AUC, ACC and RMSE over (ŷ, y) prediction sets."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from sklearn.metrics import accuracy_score, mean_squared_error, roc_auc_score

from core.errors import UndefinedMetricError

METRIC_COLUMNS = ["model", "dataset", "split", "auc", "acc", "rmse"]


def _pairs(y_hat, y) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    labels = np.asarray(y, dtype=np.float64).reshape(-1)
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.size} predictions for {labels.size} labels")
    if scores.size == 0:
        raise UndefinedMetricError("metrics need at least one prediction")
    if not np.isin(labels, (0.0, 1.0)).all():
        raise ValueError("labels must be 0 or 1")
    return scores, labels.astype(np.int64)


def auc(y_hat, y) -> float:
    """Area under the ROC curve; tied scores count half."""
    scores, labels = _pairs(y_hat, y)
    if labels.min() == labels.max():
        raise UndefinedMetricError("AUC needs at least one positive and one negative label")
    return float(roc_auc_score(labels, scores))


def acc(y_hat, y, threshold: float = 0.5) -> float:
    scores, labels = _pairs(y_hat, y)
    return float(accuracy_score(labels, (scores >= threshold).astype(np.int64)))


def rmse(y_hat, y) -> float:
    scores, labels = _pairs(y_hat, y)
    return float(np.sqrt(mean_squared_error(labels, scores)))


def has_both_classes(y) -> bool:
    labels = np.asarray(y).reshape(-1)
    return labels.size > 0 and labels.min() != labels.max()


@dataclass(frozen=True)
class MetricReport:
    auc: float
    acc: float
    rmse: float

    @classmethod
    def compute(cls, y_hat, y) -> "MetricReport":
        return cls(auc(y_hat, y), acc(y_hat, y), rmse(y_hat, y))

    def row(self, model: str, dataset: str, split: str) -> dict:
        return {"model": model, "dataset": dataset, "split": split, **asdict(self)}
