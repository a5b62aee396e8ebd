"""
Learners, exercises, concepts, relations, Q-matrix and response logs.

CSV formats (UTF-8, LF or CRLF):
  concepts.csv   id,name                    ids dense 0..K-1
  relations.csv  src,dst,kind               kind is prereq (src -> dst) or dep (unordered)
  qmatrix.csv    exercise_id,concept_id     sparse pair list
  responses.csv  learner_id,exercise_id,score
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from core.engine import DatasetEngine
from core.errors import DataLoadError, GraphError

logger = logging.getLogger(__name__)

CONCEPTS_FILE = "concepts.csv"
RELATIONS_FILE = "relations.csv"
QMATRIX_FILE = "qmatrix.csv"
RESPONSES_FILE = "responses.csv"

SPLITS = ("train", "valid", "test")
LOG_COLUMNS = ["learner_id", "exercise_id", "score"]


# ── graph ─────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ConceptGraph:
    concept_count: int
    labels: dict[int, str]
    prereq_edges: tuple[tuple[int, int], ...] = ()
    dep_edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        k = self.concept_count
        prereq = tuple((int(s), int(d)) for s, d in self.prereq_edges)
        dep = tuple((min(int(a), int(b)), max(int(a), int(b))) for a, b in self.dep_edges)
        for kind, edges in (("prereq", prereq), ("dep", dep)):
            for src, dst in edges:
                if not (0 <= src < k and 0 <= dst < k):
                    raise GraphError(f"{kind} edge ({src}, {dst}) has an endpoint outside [0, {k})")
                if src == dst:
                    raise GraphError(f"{kind} edge ({src}, {dst}) is a self-loop")
            if len(set(edges)) != len(edges):
                raise GraphError(f"duplicate {kind} edges")
        object.__setattr__(self, "prereq_edges", prereq)
        object.__setattr__(self, "dep_edges", dep)

    @property
    def edge_count(self) -> int:
        return len(self.prereq_edges) + len(self.dep_edges)

    def label(self, concept: int) -> str:
        return self.labels.get(concept, str(concept))

    def relabel(self, permutation) -> "ConceptGraph":
        """Graph with concept c renamed to permutation[c]; edge order is kept."""
        perm = [int(p) for p in permutation]
        return ConceptGraph(
            self.concept_count,
            {perm[c]: name for c, name in self.labels.items()},
            tuple((perm[s], perm[d]) for s, d in self.prereq_edges),
            tuple((perm[a], perm[b]) for a, b in self.dep_edges),
        )


# ── Q-matrix ──────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class QMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.matrix)
        if q.ndim != 2:
            raise ValueError(f"Q-matrix must be 2-D, got shape {q.shape}")
        if not np.isin(q, (0, 1)).all():
            raise ValueError("Q-matrix entries must be 0 or 1")
        empty = np.flatnonzero(q.sum(axis=1) == 0)
        if empty.size:
            raise ValueError(f"exercise {int(empty[0])} tests no concept")
        q = q.astype(np.int8)
        q.setflags(write=False)
        object.__setattr__(self, "matrix", q)

    @property
    def exercise_count(self) -> int:
        return self.matrix.shape[0]

    @property
    def concept_count(self) -> int:
        return self.matrix.shape[1]

    def rows(self, exercises) -> np.ndarray:
        return self.matrix[np.asarray(exercises, dtype=np.intp)].astype(np.float64)


def exercise_concepts(q: QMatrix, exercise: int) -> set[int]:
    if not 0 <= exercise < q.exercise_count:
        raise IndexError(f"exercise {exercise} outside [0, {q.exercise_count})")
    return {int(c) for c in np.flatnonzero(q.matrix[exercise])}


# ── responses ─────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class ResponseLog:
    """Response triplets; `frame` has learner_id, exercise_id, score and, once split, split."""

    frame: pd.DataFrame

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def is_split(self) -> bool:
        return "split" in self.frame.columns

    def part(self, name: str) -> pd.DataFrame:
        if not self.is_split:
            raise ValueError("response log has not been split")
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}; expected one of {', '.join(SPLITS)}")
        return self.frame.loc[self.frame["split"] == name, LOG_COLUMNS].reset_index(drop=True)


@dataclass(frozen=True)
class DatasetStats:
    learners: int
    exercises: int
    concepts: int
    logs: int


@dataclass(frozen=True, eq=False)
class Dataset:
    graph: ConceptGraph
    qmatrix: QMatrix
    log: ResponseLog
    stats: DatasetStats
    dropped: list[str] = field(default_factory=list)
    name: str = "dataset"

    def fingerprint(self) -> str:
        """Hash of the structure a trained model depends on (graph and Q-matrix)."""
        digest = hashlib.sha256()
        digest.update(str(self.graph.concept_count).encode())
        digest.update(repr(self.graph.prereq_edges).encode())
        digest.update(repr(self.graph.dep_edges).encode())
        digest.update(self.qmatrix.matrix.tobytes())
        digest.update(str(self.qmatrix.matrix.shape).encode())
        return digest.hexdigest()

    def with_log(self, log: ResponseLog) -> "Dataset":
        return Dataset(self.graph, self.qmatrix, log, self.stats, self.dropped, self.name)


# ── loading ───────────────────────────────────────────────────────────────────

def _load_concepts(engine: DatasetEngine, path) -> tuple[int, dict[int, str]]:
    engine.register_csv("concepts", path, ["id", "name"])
    engine.require_ids("concepts", ["id"])
    engine.typed("concepts", ["id"], ["name"])
    frame = engine.execute('SELECT line, id, name FROM "concepts" ORDER BY id, line')
    ids = frame["id"].to_numpy(dtype=np.int64)
    if len(ids) and not np.array_equal(ids, np.arange(len(ids))):
        seen = set()
        for line, cid in zip(frame["line"], ids):
            if cid in seen or cid >= len(ids):
                raise DataLoadError(path, int(line), f"concept ids must be dense 0..K-1 (found {cid})")
            seen.add(cid)
        raise DataLoadError(path, None, "concept ids must be dense 0..K-1")
    return len(ids), {int(i): str(n) for i, n in zip(ids, frame["name"])}


def _load_relations(engine: DatasetEngine, path, k: int, dropped: list[str]) -> ConceptGraph:
    engine.register_csv("relations", path, ["src", "dst", "kind"])
    engine.require_ids("relations", ["src", "dst"])
    engine.typed("relations", ["src", "dst"], ["kind"])

    row = engine.fetchone(
        "SELECT line, kind FROM \"relations\" WHERE kind NOT IN ('prereq', 'dep') ORDER BY line LIMIT 1"
    )
    if row is not None:
        raise DataLoadError(path, int(row[0]), f"relation kind must be prereq or dep, got {row[1]!r}")
    for column in ("src", "dst"):
        row = engine.first_out_of_range("relations", column, k)
        if row is not None:
            raise DataLoadError(path, int(row[0]), f"unknown concept id {row[1]}")
    row = engine.fetchone('SELECT line FROM "relations" WHERE src = dst ORDER BY line LIMIT 1')
    if row is not None:
        raise DataLoadError(path, int(row[0]), "self-loop relation")

    frame = engine.execute(
        """
        SELECT line, kind,
               CASE WHEN kind = 'dep' THEN LEAST(src, dst) ELSE src END AS a,
               CASE WHEN kind = 'dep' THEN GREATEST(src, dst) ELSE dst END AS b
        FROM "relations" ORDER BY line
        """
    )
    seen: set[tuple[str, int, int]] = set()
    prereq, dep = [], []
    for line, kind, a, b in frame.itertuples(index=False):
        key = (kind, int(a), int(b))
        if key in seen:
            dropped.append(f"{path}:{line}: duplicate {kind} edge ({a}, {b})")
            continue
        seen.add(key)
        (prereq if kind == "prereq" else dep).append((int(a), int(b)))
    return ConceptGraph(k, {}, tuple(prereq), tuple(dep))


def _load_qmatrix(engine: DatasetEngine, path, k: int, exercise_count: int | None) -> QMatrix:
    engine.register_csv("qmatrix", path, ["exercise_id", "concept_id"])
    engine.require_ids("qmatrix", ["exercise_id", "concept_id"])
    engine.typed("qmatrix", ["exercise_id", "concept_id"])
    row = engine.first_out_of_range("qmatrix", "concept_id", k)
    if row is not None:
        raise DataLoadError(path, int(row[0]), f"unknown concept id {row[1]}")
    if exercise_count is not None:
        row = engine.first_out_of_range("qmatrix", "exercise_id", exercise_count)
        if row is not None:
            raise DataLoadError(path, int(row[0]), f"unknown exercise id {row[1]}")

    pairs = engine.execute('SELECT DISTINCT exercise_id, concept_id FROM "qmatrix"')
    m = exercise_count
    if m is None:
        m = int(pairs["exercise_id"].max()) + 1 if len(pairs) else 0
    q = np.zeros((m, k), dtype=np.int8)
    q[pairs["exercise_id"].to_numpy(dtype=np.intp), pairs["concept_id"].to_numpy(dtype=np.intp)] = 1
    empty = np.flatnonzero(q.sum(axis=1) == 0)
    if empty.size:
        raise DataLoadError(path, None, f"exercise {int(empty[0])} has an empty Q-matrix row")
    return QMatrix(q)


def _load_responses(
    engine: DatasetEngine, path, m: int, learner_count: int | None, dropped: list[str]
) -> tuple[ResponseLog, int]:
    engine.register_csv("responses", path, LOG_COLUMNS)
    engine.require_ids("responses", ["learner_id", "exercise_id"])
    row = engine.fetchone(
        """
        SELECT line, score FROM "responses_raw"
        WHERE TRY_CAST(score AS DOUBLE) IS NULL OR TRY_CAST(score AS DOUBLE) NOT IN (0, 1)
        ORDER BY line LIMIT 1
        """
    )
    if row is not None:
        raise DataLoadError(path, int(row[0]), f"non-binary score {row[1]!r}")
    engine.typed(
        "responses", ["learner_id", "exercise_id"], ["CAST(CAST(score AS DOUBLE) AS BIGINT) AS score"]
    )
    row = engine.first_out_of_range("responses", "exercise_id", m)
    if row is not None:
        raise DataLoadError(path, int(row[0]), f"unknown exercise id {row[1]}")
    if learner_count is not None:
        row = engine.first_out_of_range("responses", "learner_id", learner_count)
        if row is not None:
            raise DataLoadError(path, int(row[0]), f"unknown learner id {row[1]}")

    kept, duplicates = engine.keep_last("responses", ["learner_id", "exercise_id"])
    for line, learner, exercise in duplicates[["line", "learner_id", "exercise_id"]].itertuples(index=False):
        dropped.append(f"{path}:{line}: duplicate response ({learner}, {exercise}) superseded")

    frame = kept[LOG_COLUMNS].astype(np.int64).reset_index(drop=True)
    n = learner_count
    if n is None:
        n = int(frame["learner_id"].max()) + 1 if len(frame) else 0
    return ResponseLog(frame), n


def load_dataset(
    concepts_path,
    relations_path,
    qmatrix_path,
    responses_path,
    learner_count: int | None = None,
    exercise_count: int | None = None,
    name: str = "dataset",
) -> Dataset:
    """Load and validate the four dataset files.

    Learner and exercise counts default to max id + 1. Duplicate responses for
    the same (learner, exercise) keep the last occurrence; every dropped row is
    reported in `Dataset.dropped`.
    """
    dropped: list[str] = []
    with DatasetEngine() as engine:
        k, labels = _load_concepts(engine, concepts_path)
        graph = _load_relations(engine, relations_path, k, dropped)
        graph = ConceptGraph(k, labels, graph.prereq_edges, graph.dep_edges)
        q = _load_qmatrix(engine, qmatrix_path, k, exercise_count)
        log, n = _load_responses(engine, responses_path, q.exercise_count, learner_count, dropped)

    for message in dropped:
        logger.warning("Dropped row %s", message)
    stats = DatasetStats(learners=n, exercises=q.exercise_count, concepts=k, logs=len(log))
    return Dataset(graph, q, log, stats, dropped, name)


def load_directory(directory, **kwargs) -> Dataset:
    root = Path(directory)
    kwargs.setdefault("name", root.name or "dataset")
    return load_dataset(
        root / CONCEPTS_FILE, root / RELATIONS_FILE, root / QMATRIX_FILE, root / RESPONSES_FILE, **kwargs
    )


def save_dataset(dataset: Dataset, directory) -> list[Path]:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    graph = dataset.graph

    concepts = pd.DataFrame(
        {"id": range(graph.concept_count), "name": [graph.label(c) for c in range(graph.concept_count)]}
    )
    relations = pd.DataFrame(
        [(s, d, "prereq") for s, d in graph.prereq_edges] + [(a, b, "dep") for a, b in graph.dep_edges],
        columns=["src", "dst", "kind"],
    )
    ex, co = np.nonzero(dataset.qmatrix.matrix)
    qmatrix = pd.DataFrame({"exercise_id": ex, "concept_id": co})
    responses = dataset.log.frame[LOG_COLUMNS]

    written = []
    for frame, filename in (
        (concepts, CONCEPTS_FILE),
        (relations, RELATIONS_FILE),
        (qmatrix, QMATRIX_FILE),
        (responses, RESPONSES_FILE),
    ):
        path = root / filename
        frame.to_csv(path, index=False, lineterminator="\n")
        written.append(path)
    return written


# ── splitting ─────────────────────────────────────────────────────────────────

def _split_counts(n: int, ratio: tuple[int, int, int]) -> tuple[int, int, int]:
    whole = sum(ratio)
    n_valid = int(round(n * ratio[1] / whole))
    n_test = int(round(n * ratio[2] / whole))
    return n - n_valid - n_test, n_valid, n_test


def split(log: ResponseLog, ratio: tuple[int, int, int] = (7, 1, 2), seed: int = 0) -> ResponseLog:
    """Partition each learner's responses into train/valid/test.

    Learners with fewer than three responses go entirely to train.
    """
    if len(ratio) != 3 or any(r <= 0 for r in ratio):
        raise ValueError(f"split ratio components must be positive, got {ratio}")
    rng = np.random.default_rng(seed)
    frame = log.frame[LOG_COLUMNS].reset_index(drop=True)
    labels = np.empty(len(frame), dtype=object)

    short = []
    for learner, rows in sorted(frame.groupby("learner_id").indices.items()):
        rows = np.asarray(rows)
        if len(rows) < 3:
            labels[rows] = "train"
            short.append(int(learner))
            continue
        order = rows[rng.permutation(len(rows))]
        n_train, n_valid, _ = _split_counts(len(rows), ratio)
        labels[order[:n_train]] = "train"
        labels[order[n_train : n_train + n_valid]] = "valid"
        labels[order[n_train + n_valid :]] = "test"

    if short:
        logger.warning(
            "%d learner(s) have fewer than 3 responses and were assigned to train: %s",
            len(short),
            short[:10],
        )
    return ResponseLog(frame.assign(split=labels))


# ── reporting ─────────────────────────────────────────────────────────────────

def dataset_summary(stats: DatasetStats, name: str = "dataset") -> pd.DataFrame:
    return pd.DataFrame(
        {name: [stats.learners, stats.exercises, stats.concepts, stats.logs]},
        index=["#learners", "#exercises", "#concepts", "#response logs"],
    )
