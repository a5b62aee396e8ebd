import numpy as np
import pandas as pd
import pytest

from core.config import TrainConfig
from src.dataset import ConceptGraph, Dataset, DatasetStats, QMatrix, ResponseLog, split


def write_dataset_files(root, concepts, relations, qmatrix, responses):
    """Write the four CSVs from plain row lists; returns the directory."""
    root.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(concepts, columns=["id", "name"]).to_csv(root / "concepts.csv", index=False)
    pd.DataFrame(relations, columns=["src", "dst", "kind"]).to_csv(root / "relations.csv", index=False)
    pd.DataFrame(qmatrix, columns=["exercise_id", "concept_id"]).to_csv(root / "qmatrix.csv", index=False)
    pd.DataFrame(responses, columns=["learner_id", "exercise_id", "score"]).to_csv(
        root / "responses.csv", index=False
    )
    return root


@pytest.fixture
def data_dir(tmp_path):
    # 4 concepts, 3 exercises, 3 learners
    return write_dataset_files(
        tmp_path / "toy",
        [(0, "fractions"), (1, "ratios"), (2, "percent"), (3, "decimals")],
        [(0, 1, "prereq"), (1, 2, "prereq"), (3, 0, "dep")],
        [(0, 0), (1, 1), (1, 2), (2, 0), (2, 1), (2, 3)],
        [(0, 0, 1), (0, 1, 0), (0, 2, 1), (1, 0, 1), (1, 2, 0), (2, 1, 1), (2, 2, 1)],
    )


def random_graph(k: int, rng: np.random.Generator, p_prereq: float = 0.3, p_dep: float = 0.2) -> ConceptGraph:
    order = rng.permutation(k)
    prereq = [
        (int(order[i]), int(order[j])) for i in range(k) for j in range(i + 1, k) if rng.random() < p_prereq
    ]
    linked = {frozenset(e) for e in prereq}
    dep = [
        (a, b)
        for a in range(k)
        for b in range(a + 1, k)
        if frozenset((a, b)) not in linked and rng.random() < p_dep
    ]
    return ConceptGraph(k, {}, tuple(prereq), tuple(dep))


def random_qmatrix(m: int, k: int, rng: np.random.Generator) -> QMatrix:
    q = (rng.random((m, k)) < 0.4).astype(np.int8)
    q[np.arange(m), rng.integers(k, size=m)] = 1
    return QMatrix(q)


def small_dataset(graph: ConceptGraph, learners: int = 4, exercises: int = 6, seed: int = 0) -> Dataset:
    """Every learner answers every exercise with random scores; split 7:1:2."""
    rng = np.random.default_rng(seed)
    q = random_qmatrix(exercises, graph.concept_count, rng)
    frame = pd.DataFrame(
        [(n, e, int(rng.random() < 0.5)) for n in range(learners) for e in range(exercises)],
        columns=["learner_id", "exercise_id", "score"],
    )
    stats = DatasetStats(learners, exercises, graph.concept_count, len(frame))
    dataset = Dataset(graph, q, ResponseLog(frame), stats, [], "toy")
    return dataset.with_log(split(dataset.log, (7, 1, 2), seed))


def tiny_config(**overrides) -> TrainConfig:
    values = dict(dim=4, layers=1, hidden1=8, hidden2=4, batch_size=8, dropout=0.0, max_epochs=3, patience=2)
    values.update(overrides)
    return TrainConfig(**values)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
