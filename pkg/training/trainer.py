"""
Mini-batch training with early stopping.

Each epoch shuffles the train triplets with the run's seeded generator, runs
one tape per batch, steps Adam, then scores the validation split. The score
that drives early stopping is fixed once per run: validation AUC when the
split holds both classes, otherwise negative validation log-loss, otherwise
negative training loss. The best parameters seen are restored at the end.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from tqdm import tqdm

from core.autodiff import Tape, Tensor
from core.config import TrainConfig
from core.errors import TrainingDivergedError, UndefinedMetricError
from core.parameters import ParameterStore
from core.utils import write_atomic
from models.base import DiagnosisModel, ModelDims
from models.cscd import CSCDModel
from models.irt import IRTModel
from models.prediction import loss
from training.checkpoint import Checkpoint
from training.metrics import MetricReport, acc, auc, has_both_classes, rmse
from training.optimizer import Adam

logger = logging.getLogger(__name__)

MODEL_CLASSES = {"cscd": CSCDModel, "irt": IRTModel}
LOG_HEADER = ["epoch", "train_loss", "valid_auc", "valid_acc", "valid_rmse"]
EVAL_BATCH = 1024


def build_model(dataset, config: TrainConfig, params: ParameterStore | None = None) -> DiagnosisModel:
    cls = MODEL_CLASSES[config.model]
    return cls(dataset.graph, dataset.qmatrix, config, dataset.stats.learners, params)


def init_params(config: TrainConfig, dims: ModelDims) -> ParameterStore:
    """Xavier-uniform weights and zero biases for the configured model, seeded by config.seed."""
    specs = MODEL_CLASSES[config.model].parameter_specs(dims, config)
    return ParameterStore.initialize(specs, seed=config.seed)


def load_model(checkpoint: Checkpoint, dataset) -> DiagnosisModel:
    checkpoint.check_dataset(dataset)
    return build_model(dataset, checkpoint.config, checkpoint.params)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_auc: float = float("nan")
    valid_acc: float = float("nan")
    valid_rmse: float = float("nan")


@dataclass
class TrainingResult:
    checkpoint: Checkpoint
    model: DiagnosisModel
    log: list[EpochRecord] = field(default_factory=list)
    stopped_early: bool = False

    def log_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.log], columns=LOG_HEADER)


def predict_frame(model: DiagnosisModel, frame: pd.DataFrame, batch_size: int = EVAL_BATCH) -> np.ndarray:
    learners = frame["learner_id"].to_numpy(dtype=np.intp)
    exercises = frame["exercise_id"].to_numpy(dtype=np.intp)
    out = np.empty(len(frame), dtype=np.float64)
    for start in range(0, len(frame), batch_size):
        stop = start + batch_size
        out[start:stop] = model.forward(learners[start:stop], exercises[start:stop], train=False).numpy()[:, 0]
    return out


def mean_log_loss(y_hat: np.ndarray, y: np.ndarray) -> float:
    return loss(Tensor(y_hat.reshape(-1, 1)), y).item()


def _choose_monitor(valid: pd.DataFrame) -> str:
    if has_both_classes(valid["score"]):
        return "valid_auc"
    if len(valid):
        logger.warning("validation split holds a single class; early stopping on validation log-loss")
        return "valid_loss"
    logger.warning("validation split is empty; early stopping on training loss")
    return "train_loss"


def _validate(model, valid: pd.DataFrame, record: EpochRecord, monitor: str) -> float:
    if len(valid):
        y = valid["score"].to_numpy(dtype=np.float64)
        y_hat = predict_frame(model, valid)
        record.valid_acc = acc(y_hat, y)
        record.valid_rmse = rmse(y_hat, y)
        if monitor == "valid_auc":
            record.valid_auc = auc(y_hat, y)
            return record.valid_auc
        if monitor == "valid_loss":
            return -mean_log_loss(y_hat, y)
    return -record.train_loss


def train(dataset, config: TrainConfig, progress: bool = False) -> TrainingResult:
    """Fit the configured model on the train split and keep the best-scoring epoch."""
    if not dataset.log.is_split:
        raise ValueError("dataset must be split before training")
    train_frame = dataset.log.part("train")
    valid_frame = dataset.log.part("valid")
    if len(train_frame) == 0:
        raise ValueError("train split is empty")

    model = build_model(dataset, config)
    optimizer = Adam(config.lr, decay=config.lr_decay)
    rng = np.random.default_rng(config.seed)
    monitor = _choose_monitor(valid_frame)

    learners = train_frame["learner_id"].to_numpy(dtype=np.intp)
    exercises = train_frame["exercise_id"].to_numpy(dtype=np.intp)
    scores = train_frame["score"].to_numpy(dtype=np.float64)
    n = len(train_frame)

    logger.info(
        "Training %s (%s) on %s: %d train / %d valid triplets, %d parameters",
        config.model,
        config.ablation,
        dataset.name,
        n,
        len(valid_frame),
        model.params.size,
    )

    history: list[EpochRecord] = []
    best_score, best_epoch, stale = -np.inf, 0, 0
    best_params = model.params.snapshot()
    stopped_early = False

    epochs = tqdm(range(1, config.max_epochs + 1), desc="epochs", disable=not progress, leave=False)
    for epoch in epochs:
        order = rng.permutation(n)
        running = 0.0
        for batch, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            model.params.zero_grad()
            with Tape() as tape:
                y_hat = model.forward(learners[idx], exercises[idx], train=True, rng=rng)
                objective = loss(y_hat, scores[idx])
            value = objective.item()
            if not np.isfinite(value):
                raise TrainingDivergedError(epoch, batch, value)
            tape.backward(objective)
            optimizer.step(model.params)
            model.after_step()
            running += value * len(idx)
        optimizer.end_epoch()

        record = EpochRecord(epoch=epoch, train_loss=running / n)
        score = _validate(model, valid_frame, record, monitor)
        history.append(record)
        logger.info(
            "epoch %d: train_loss=%.4f valid_auc=%.4f valid_acc=%.4f valid_rmse=%.4f",
            epoch,
            record.train_loss,
            record.valid_auc,
            record.valid_acc,
            record.valid_rmse,
        )

        if score > best_score + config.min_delta:
            best_score, best_epoch, stale = score, epoch, 0
            best_params = model.params.snapshot()
        else:
            stale += 1
            if stale >= config.patience:
                stopped_early = epoch < config.max_epochs
                logger.info("No improvement for %d epochs; stopping at epoch %d", stale, epoch)
                break

    model.params.restore(best_params)
    checkpoint = Checkpoint(
        config=config,
        dims=model.dims,
        fingerprint=dataset.fingerprint(),
        epoch=best_epoch,
        best_score=float(best_score),
        monitor=monitor,
        params=model.params,
        dataset=dataset.name,
    )
    logger.info("Best %s %.4f at epoch %d", monitor, best_score, best_epoch)
    return TrainingResult(checkpoint, model, history, stopped_early)


def evaluate(model: DiagnosisModel, dataset, split: str = "test") -> MetricReport:
    frame = dataset.log.part(split)
    if len(frame) == 0:
        raise UndefinedMetricError(f"{split} split is empty")
    y_hat = predict_frame(model, frame)
    return MetricReport.compute(y_hat, frame["score"].to_numpy(dtype=np.float64))


def write_training_log(result: TrainingResult, path) -> None:
    write_atomic(path, result.log_frame().to_csv(index=False, lineterminator="\n"))
