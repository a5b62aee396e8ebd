"""
End-to-end pipeline behind the command-line interface.

Every command runs inside `Orchestrator.track`, which records inputs (with
their SHA-256), outputs, timings and the resolved config in a RunManifest and
writes it atomically when the command finishes, successfully or not.
"""
import logging
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import pandas as pd

from core.config import SyntheticSpec, TrainConfig
from core.utils import file_sha256, sanitize_name, write_atomic, write_json_atomic
from reports.export import metrics_csv, write_diagnoses, write_radar
from src.dataset import (
    CONCEPTS_FILE,
    QMATRIX_FILE,
    RELATIONS_FILE,
    RESPONSES_FILE,
    dataset_summary,
    load_directory,
    save_dataset,
    split,
)
from src.synthetic import defect_quintile_rate, load_truth, recovery_score, save_truth, synthetic_dataset
from training.checkpoint import Checkpoint
from training.trainer import evaluate, load_model, train, write_training_log

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = "checkpoint.json"
TRAINING_LOG_FILE = "training_log.csv"
METRICS_FILE = "metrics.csv"
ABLATION_FILE = "ablation.csv"
DIAGNOSIS_FILE = "diagnosis.json"
RECOVERY_FILE = "recovery.json"
ABLATION_MODES = ("K", "R", "K+R")


@dataclass
class RunManifest:
    command: str
    config: dict = field(default_factory=dict)
    inputs: dict[str, str] = field(default_factory=dict)
    seed: int | None = None
    outputs: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    status: str = "running"
    error: str | None = None

    def add_input(self, path) -> None:
        path = Path(path)
        if path.is_file():
            self.inputs[str(path)] = file_sha256(path)

    def add_output(self, path) -> Path:
        self.outputs.append(str(path))
        return Path(path)

    def write(self, path) -> Path:
        return write_json_atomic(path, asdict(self))


def model_label(config: TrainConfig) -> str:
    return "IRT" if config.model == "irt" else f"CSCD-{config.ablation}"


class Orchestrator:
    def __init__(self, out_dir, progress: bool = False):
        self.out_dir = Path(out_dir)
        self.progress = progress
        self.manifest: RunManifest | None = None

    # ── bookkeeping ──────────────────────────────────────────────────────────

    @contextmanager
    def track(self, command: str, config=None, seed: int | None = None):
        self.manifest = RunManifest(
            command=command,
            config=config.model_dump(mode="json") if config is not None else {},
            seed=seed,
        )
        started = time.perf_counter()
        try:
            yield self.manifest
            self.manifest.status = "ok"
        except BaseException as e:
            self.manifest.status = "failed"
            self.manifest.error = f"{type(e).__name__}: {e}"
            raise
        finally:
            self.manifest.timings["total_seconds"] = round(time.perf_counter() - started, 6)
            self.out_dir.mkdir(parents=True, exist_ok=True)
            path = self.manifest.write(self.out_dir / f"{command}.manifest.json")
            logger.info("Manifest written to %s (%s)", path, self.manifest.status)

    def _timed(self, name: str, started: float) -> None:
        self.manifest.timings[name] = round(time.perf_counter() - started, 6)

    def load(self, data_dir, ratio=(7, 1, 2), seed: int = 0, learners=None, exercises=None):
        root = Path(data_dir)
        for filename in (CONCEPTS_FILE, RELATIONS_FILE, QMATRIX_FILE, RESPONSES_FILE):
            self.manifest.add_input(root / filename)
        started = time.perf_counter()
        dataset = load_directory(
            root, learner_count=learners, exercise_count=exercises, name=sanitize_name(root.resolve().name)
        )
        dataset = dataset.with_log(split(dataset.log, ratio, seed))
        self._timed("load_seconds", started)
        return dataset

    # ── commands ─────────────────────────────────────────────────────────────

    def generate(self, spec: SyntheticSpec) -> list[Path]:
        with self.track("generate", spec, spec.seed):
            started = time.perf_counter()
            dataset, truth = synthetic_dataset(spec, name=sanitize_name(self.out_dir.name))
            written = save_dataset(dataset, self.out_dir) + save_truth(truth, dataset.graph, self.out_dir)
            for path in written:
                self.manifest.add_output(path)
            self._timed("generate_seconds", started)
            logger.info("Wrote %d files to %s", len(written), self.out_dir)
            return written

    def train(self, data_dir, config: TrainConfig, learners=None, exercises=None) -> dict:
        with self.track("train", config, config.seed):
            dataset = self.load(data_dir, config.ratio, config.seed, learners, exercises)
            started = time.perf_counter()
            result = train(dataset, config, progress=self.progress)
            self._timed("train_seconds", started)

            checkpoint = self.manifest.add_output(result.checkpoint.save(self.out_dir / CHECKPOINT_FILE))
            log_path = self.out_dir / TRAINING_LOG_FILE
            write_training_log(result, log_path)
            self.manifest.add_output(log_path)

            report = evaluate(result.model, dataset, "test")
            row = report.row(model_label(config), dataset.name, "test")
            metrics = write_atomic(self.out_dir / METRICS_FILE, metrics_csv([row]))
            self.manifest.add_output(metrics)
            return {"checkpoint": checkpoint, "epochs": len(result.log), "test": row}

    def _restore(self, checkpoint_path, data_dir, learners=None, exercises=None):
        self.manifest.add_input(checkpoint_path)
        checkpoint = Checkpoint.load(checkpoint_path)
        self.manifest.config = checkpoint.config.model_dump(mode="json")
        self.manifest.seed = checkpoint.config.seed
        # counts declared at train time live in the checkpoint dims
        learners = checkpoint.dims.learners if learners is None else learners
        exercises = checkpoint.dims.exercises if exercises is None else exercises
        dataset = self.load(data_dir, checkpoint.config.ratio, checkpoint.config.seed, learners, exercises)
        return checkpoint, dataset, load_model(checkpoint, dataset)

    def evaluate(self, checkpoint_path, data_dir, split_name: str = "test", learners=None, exercises=None) -> dict:
        with self.track("evaluate"):
            checkpoint, dataset, model = self._restore(checkpoint_path, data_dir, learners, exercises)
            report = evaluate(model, dataset, split_name)
            return report.row(model_label(checkpoint.config), dataset.name, split_name)

    def ablate(self, data_dir, config: TrainConfig, with_irt: bool = False, learners=None, exercises=None) -> list[dict]:
        with self.track("ablate", config, config.seed):
            dataset = self.load(data_dir, config.ratio, config.seed, learners, exercises)
            variants = [config.model_copy(update={"model": "cscd", "ablation": m}) for m in ABLATION_MODES]
            if with_irt:
                variants.append(config.model_copy(update={"model": "irt"}))

            rows = []
            for variant in variants:
                started = time.perf_counter()
                result = train(dataset, variant, progress=self.progress)
                label = model_label(variant)
                self._timed(f"{label}_seconds", started)
                rows.append(evaluate(result.model, dataset, "test").row(label, dataset.name, "test"))
                logger.info("%s: test AUC %.4f", label, rows[-1]["auc"])

            path = write_atomic(self.out_dir / ABLATION_FILE, metrics_csv(rows))
            self.manifest.add_output(path)
            return rows

    def diagnose(
        self, checkpoint_path, data_dir, learner_ids, svg: bool = False, edges: int = 5, learners=None, exercises=None
    ) -> list[Path]:
        with self.track("diagnose"):
            checkpoint, dataset, model = self._restore(checkpoint_path, data_dir, learners, exercises)
            if checkpoint.model != "cscd":
                raise ValueError(f"diagnosis needs a CSCD checkpoint, got {checkpoint.model!r}")
            diagnoses = []
            for learner in learner_ids:
                if not 0 <= learner < dataset.stats.learners:
                    raise ValueError(f"unknown learner {learner}; valid ids are 0..{dataset.stats.learners - 1}")
                diagnoses.append(model.diagnose(learner))

            labels = dataset.graph.labels
            written = [self.manifest.add_output(write_diagnoses(diagnoses, self.out_dir / DIAGNOSIS_FILE, labels))]
            if svg:
                for diagnosis in diagnoses:
                    path = self.out_dir / f"radar_{diagnosis.learner_id}.svg"
                    written.append(self.manifest.add_output(write_radar(diagnosis, path, labels, edges)))
            return written

    def recover(self, checkpoint_path, data_dir, truth_dir=None, learners=None, exercises=None) -> dict:
        with self.track("recover"):
            checkpoint, dataset, model = self._restore(checkpoint_path, data_dir, learners, exercises)
            if checkpoint.model != "cscd":
                raise ValueError(f"recovery scoring needs a CSCD checkpoint, got {checkpoint.model!r}")
            truth_root = Path(truth_dir or data_dir)
            truth = load_truth(truth_root, dataset.graph, dataset.stats.learners)
            diagnoses = [model.diagnose(n) for n in range(dataset.stats.learners)]
            ks_auc, kus_auc = recovery_score(diagnoses, truth, dataset.graph)
            summary = {
                "dataset": dataset.name,
                "ks_auc": ks_auc,
                "kus_auc": kus_auc,
                "defect_lowest_quintile": defect_quintile_rate(diagnoses, truth, dataset.graph),
            }
            self.manifest.add_output(write_json_atomic(self.out_dir / RECOVERY_FILE, summary))
            return summary

    def stats(self, data_dir, learners=None, exercises=None) -> pd.DataFrame:
        with self.track("stats"):
            root = Path(data_dir)
            for filename in (CONCEPTS_FILE, RELATIONS_FILE, QMATRIX_FILE, RESPONSES_FILE):
                self.manifest.add_input(root / filename)
            dataset = load_directory(root, learner_count=learners, exercise_count=exercises)
            return dataset_summary(dataset.stats, sanitize_name(root.resolve().name))
