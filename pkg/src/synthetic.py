"""
Synthetic learners with planted knowledge and structure states.

Prerequisites form a random DAG over a shuffled concept order, dependencies
join random unrelated pairs. Every learner masters each concept with a
probability driven by a low-rank latent trait and misunderstands each edge
with probability `defect_rate`. Responses follow a conjunctive rule: an
exercise is answered correctly with probability 1 - slip when every tested
concept is mastered and every relation among those concepts is understood,
otherwise with probability guess.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from core.config import SyntheticSpec
from core.engine import read_csv_rows
from core.errors import DataLoadError, UndefinedMetricError
from src.dataset import (
    LOG_COLUMNS,
    ConceptGraph,
    Dataset,
    DatasetStats,
    QMatrix,
    ResponseLog,
)
from training.metrics import auc

logger = logging.getLogger(__name__)

TRUTH_KS_FILE = "truth_ks.csv"
TRUTH_KUS_FILE = "truth_kus.csv"
KS_COLUMNS = ["learner_id", "concept_id", "bit"]
KUS_COLUMNS = ["learner_id", "src", "dst", "kind", "bit"]
MASTERY_OFFSET = 0.5


@dataclass(eq=False)
class GroundTruth:
    mastery: np.ndarray  # N×K bits
    prereq: np.ndarray  # N×P bits, graph edge order
    dep: np.ndarray  # N×D bits

    @property
    def learners(self) -> int:
        return self.mastery.shape[0]

    def understanding(self, kind: str) -> np.ndarray:
        return self.prereq if kind == "prereq" else self.dep

    def edge_bit(self, learner: int, kind: str, index: int) -> int:
        return int(self.understanding(kind)[learner, index])


# ── response rule ─────────────────────────────────────────────────────────────

def response_probability(mastered, understood, guess: float, slip: float) -> float:
    """P(correct) under the conjunctive rule for one learner and one exercise.

    `mastered` holds the learner's bits for the exercise's concepts,
    `understood` the bits for the relations among them.
    """
    if all(bool(b) for b in mastered) and all(bool(b) for b in understood):
        return 1.0 - slip
    return guess


def edges_within(graph: ConceptGraph, concepts) -> list[tuple[str, int]]:
    """(kind, edge index) of every relation with both endpoints in `concepts`."""
    inside = {int(c) for c in concepts}
    found = [("prereq", i) for i, (s, d) in enumerate(graph.prereq_edges) if s in inside and d in inside]
    found += [("dep", i) for i, (a, b) in enumerate(graph.dep_edges) if a in inside and b in inside]
    return found


def _edge_index(graph: ConceptGraph) -> dict[str, dict[tuple[int, int], int]]:
    return {
        "prereq": {e: i for i, e in enumerate(graph.prereq_edges)},
        "dep": {e: i for i, e in enumerate(graph.dep_edges)},
    }


def simulate_responses(
    graph: ConceptGraph,
    qmatrix: QMatrix,
    truth: GroundTruth,
    pairs,
    guess: float,
    slip: float,
    rng: np.random.Generator,
) -> pd.DataFrame:
    """Draw a score for every (learner, exercise) pair under the conjunctive rule."""
    tested = [np.flatnonzero(qmatrix.matrix[e]) for e in range(qmatrix.exercise_count)]
    within = [edges_within(graph, c) for c in tested]
    rows = []
    for learner, exercise in pairs:
        p = response_probability(
            truth.mastery[learner, tested[exercise]],
            [truth.edge_bit(learner, kind, i) for kind, i in within[exercise]],
            guess,
            slip,
        )
        rows.append((int(learner), int(exercise), int(rng.random() < p)))
    return pd.DataFrame(rows, columns=LOG_COLUMNS, dtype=np.int64)


# ── generation ────────────────────────────────────────────────────────────────

def _random_graph(spec: SyntheticSpec, rng: np.random.Generator) -> ConceptGraph:
    k = spec.concepts
    order = rng.permutation(k)
    prereq = []
    for i in range(k):
        for j in range(i + 1, k):
            if rng.random() < spec.prereq_prob:
                prereq.append((int(order[i]), int(order[j])))
    linked = {frozenset(e) for e in prereq}
    dep = []
    for a in range(k):
        for b in range(a + 1, k):
            if rng.random() < spec.dep_prob and frozenset((a, b)) not in linked:
                dep.append((a, b))
    labels = {c: f"concept_{c}" for c in range(k)}
    return ConceptGraph(k, labels, tuple(prereq), tuple(dep))


def _random_qmatrix(spec: SyntheticSpec, graph: ConceptGraph, rng: np.random.Generator) -> QMatrix:
    """Each exercise grows a connected concept set of 1..max size along the graph where it can."""
    k = spec.concepts
    adjacency: list[set[int]] = [set() for _ in range(k)]
    for a, b in graph.prereq_edges + graph.dep_edges:
        adjacency[a].add(b)
        adjacency[b].add(a)

    q = np.zeros((spec.exercises, k), dtype=np.int8)
    largest = min(spec.max_concepts_per_exercise, k)
    for e in range(spec.exercises):
        size = int(rng.integers(1, largest + 1))
        chosen = {int(rng.integers(k))}
        while len(chosen) < size:
            frontier = sorted(set().union(*(adjacency[c] for c in chosen)) - chosen)
            pool = frontier or sorted(set(range(k)) - chosen)
            chosen.add(int(rng.choice(pool)))
        q[e, sorted(chosen)] = 1
    return QMatrix(q)


def _random_truth(spec: SyntheticSpec, graph: ConceptGraph, rng: np.random.Generator) -> GroundTruth:
    trait = rng.normal(size=(spec.learners, spec.d_true))
    loading = rng.normal(size=(spec.concepts, spec.d_true))
    p_master = 1.0 / (1.0 + np.exp(-(trait @ loading.T + MASTERY_OFFSET)))
    mastery = (rng.random(p_master.shape) < p_master).astype(np.int8)
    prereq = (rng.random((spec.learners, len(graph.prereq_edges))) >= spec.defect_rate).astype(np.int8)
    dep = (rng.random((spec.learners, len(graph.dep_edges))) >= spec.defect_rate).astype(np.int8)
    return GroundTruth(mastery, prereq, dep)


def generate(spec: SyntheticSpec) -> tuple[ConceptGraph, QMatrix, ResponseLog, GroundTruth]:
    rng = np.random.default_rng(spec.seed)
    graph = _random_graph(spec, rng)
    qmatrix = _random_qmatrix(spec, graph, rng)
    truth = _random_truth(spec, graph, rng)

    answered = max(1, int(round(spec.answer_rate * spec.exercises)))
    pairs = []
    for learner in range(spec.learners):
        for exercise in np.sort(rng.choice(spec.exercises, size=answered, replace=False)):
            pairs.append((learner, int(exercise)))
    frame = simulate_responses(graph, qmatrix, truth, pairs, spec.guess, spec.slip, rng)

    logger.info(
        "Generated %d learners, %d exercises, %d concepts (%d prereq, %d dep edges), %d responses",
        spec.learners,
        spec.exercises,
        spec.concepts,
        len(graph.prereq_edges),
        len(graph.dep_edges),
        len(frame),
    )
    return graph, qmatrix, ResponseLog(frame), truth


def synthetic_dataset(spec: SyntheticSpec, name: str = "synthetic") -> tuple[Dataset, GroundTruth]:
    graph, qmatrix, log, truth = generate(spec)
    stats = DatasetStats(spec.learners, spec.exercises, spec.concepts, len(log))
    return Dataset(graph, qmatrix, log, stats, [], name), truth


# ── persistence ───────────────────────────────────────────────────────────────

def save_truth(truth: GroundTruth, graph: ConceptGraph, directory) -> list[Path]:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    n, k = truth.mastery.shape

    ks = pd.DataFrame(
        {
            "learner_id": np.repeat(np.arange(n), k),
            "concept_id": np.tile(np.arange(k), n),
            "bit": truth.mastery.reshape(-1),
        }
    )
    parts = []
    for kind, edges in (("prereq", graph.prereq_edges), ("dep", graph.dep_edges)):
        bits = truth.understanding(kind)
        for idx, (src, dst) in enumerate(edges):
            parts.append(
                pd.DataFrame(
                    {"learner_id": np.arange(n), "src": src, "dst": dst, "kind": kind, "bit": bits[:, idx]}
                )
            )
    kus = pd.concat(parts, ignore_index=True) if parts else pd.DataFrame(columns=KUS_COLUMNS)
    kus = kus.sort_values(["learner_id"], kind="stable")[KUS_COLUMNS]

    ks_path, kus_path = root / TRUTH_KS_FILE, root / TRUTH_KUS_FILE
    ks.to_csv(ks_path, index=False, lineterminator="\n")
    kus.to_csv(kus_path, index=False, lineterminator="\n")
    return [ks_path, kus_path]


def _truth_row(path, line, values, limits) -> list[int]:
    try:
        parsed = [int(v) for v in values]
    except ValueError:
        raise DataLoadError(path, int(line), f"malformed row {list(values)}") from None
    for value, limit in zip(parsed, limits):
        if not 0 <= value < limit:
            raise DataLoadError(path, int(line), f"id {value} outside [0, {limit})")
    return parsed


def load_truth(directory, graph: ConceptGraph, learners: int) -> GroundTruth:
    root = Path(directory)
    ks_path, kus_path = root / TRUTH_KS_FILE, root / TRUTH_KUS_FILE
    for path in (ks_path, kus_path):
        if not path.is_file():
            raise FileNotFoundError(f"ground truth file not found: {path}")

    mastery = np.zeros((learners, graph.concept_count), dtype=np.int8)
    prereq = np.zeros((learners, len(graph.prereq_edges)), dtype=np.int8)
    dep = np.zeros((learners, len(graph.dep_edges)), dtype=np.int8)
    index = _edge_index(graph)

    ks = read_csv_rows(ks_path, KS_COLUMNS)
    for line, n, c, bit in ks[["line", *KS_COLUMNS]].itertuples(index=False):
        n, c, bit = _truth_row(ks_path, line, (n, c, bit), (learners, graph.concept_count, 2))
        mastery[n, c] = bit

    kus = read_csv_rows(kus_path, KUS_COLUMNS)
    for line, n, s, d, kind, bit in kus[["line", *KUS_COLUMNS]].itertuples(index=False):
        n, s, d, bit = _truth_row(kus_path, line, (n, s, d, bit), (learners, graph.concept_count, graph.concept_count, 2))
        edge = (s, d) if kind == "prereq" else (min(s, d), max(s, d))
        if edge not in index.get(kind, {}):
            raise DataLoadError(kus_path, int(line), f"{kind} edge {edge} is not in the graph")
        (prereq if kind == "prereq" else dep)[n, index[kind][edge]] = bit
    return GroundTruth(mastery, prereq, dep)


# ── recovery ──────────────────────────────────────────────────────────────────

def _as_list(diagnosis) -> list:
    return list(diagnosis) if isinstance(diagnosis, (list, tuple)) else [diagnosis]


def _kus_pairs(diagnoses, truth: GroundTruth, graph: ConceptGraph):
    index = _edge_index(graph)
    scores, bits = [], []
    for diagnosis in diagnoses:
        for edge in diagnosis.kus:
            i = index[edge.kind][(edge.src, edge.dst)]
            scores.append(edge.score)
            bits.append(truth.edge_bit(diagnosis.learner_id, edge.kind, i))
    return np.asarray(scores), np.asarray(bits)


def recovery_score(diagnosis, truth: GroundTruth, graph: ConceptGraph) -> tuple[float, float]:
    """(ks_auc, kus_auc) of predicted scalars against planted bits, pooled over learners."""
    diagnoses = _as_list(diagnosis)
    ks_scores = np.concatenate([d.ks for d in diagnoses])
    ks_bits = np.concatenate([truth.mastery[d.learner_id] for d in diagnoses])
    kus_scores, kus_bits = _kus_pairs(diagnoses, truth, graph)
    return auc(ks_scores, ks_bits), auc(kus_scores, kus_bits)


def defect_quintile_rate(diagnosis, truth: GroundTruth, graph: ConceptGraph, fraction: float = 0.2) -> float:
    """Share of planted-defect edges ranked in their learner's lowest KUS quintile."""
    index = _edge_index(graph)
    hits = total = 0
    for d in _as_list(diagnosis):
        if not d.kus:
            continue
        cutoff = max(1, math.ceil(fraction * len(d.kus)))
        lowest = {(e.kind, e.src, e.dst) for e in d.weakest_edges(cutoff)}
        for edge in d.kus:
            if truth.edge_bit(d.learner_id, edge.kind, index[edge.kind][(edge.src, edge.dst)]) == 0:
                total += 1
                hits += (edge.kind, edge.src, edge.dst) in lowest
    if total == 0:
        raise UndefinedMetricError("no planted-defect edges among the diagnosed learners")
    return hits / total
