import numpy as np
import pandas as pd
import pytest

from conftest import write_dataset_files
from core.errors import DataLoadError, GraphError
from src.dataset import (
    ConceptGraph,
    QMatrix,
    ResponseLog,
    dataset_summary,
    exercise_concepts,
    load_directory,
    save_dataset,
    split,
)


# ── loading ───────────────────────────────────────────────────────────────────

def test_load_directory(data_dir):
    dataset = load_directory(data_dir)
    assert dataset.stats.learners == 3
    assert dataset.stats.exercises == 3
    assert dataset.stats.concepts == 4
    assert dataset.stats.logs == 7
    assert dataset.graph.prereq_edges == ((0, 1), (1, 2))
    assert dataset.graph.dep_edges == ((0, 3),)
    assert dataset.graph.label(2) == "percent"
    assert dataset.dropped == []


def test_declared_learner_count_overrides_inference(data_dir):
    dataset = load_directory(data_dir, learner_count=10)
    assert dataset.stats.learners == 10
    assert dataset.stats.exercises == 3


def test_declared_exercises_without_concepts_rejected(data_dir):
    with pytest.raises(DataLoadError, match="exercise 3 has an empty Q-matrix row"):
        load_directory(data_dir, exercise_count=5)


def test_declared_exercises_must_cover_qmatrix(data_dir):
    with pytest.raises(DataLoadError, match="unknown exercise id 2"):
        load_directory(data_dir, exercise_count=2)


def test_empty_log_is_valid(tmp_path):
    root = write_dataset_files(tmp_path / "d", [(0, "a"), (1, "b")], [(0, 1, "prereq")], [(0, 0), (1, 1)], [])
    dataset = load_directory(root)
    assert len(dataset.log) == 0
    assert dataset.stats.learners == 0
    assert dataset.graph.edge_count == 1


def test_duplicate_response_keeps_last(tmp_path):
    root = write_dataset_files(
        tmp_path / "d", [(0, "a")], [], [(0, 0)], [(0, 0, 0), (1, 0, 1), (0, 0, 1)]
    )
    dataset = load_directory(root)
    assert len(dataset.log) == 2
    assert len(dataset.dropped) == 1
    assert "responses.csv:2" in dataset.dropped[0]
    frame = dataset.log.frame
    assert frame.loc[frame["learner_id"] == 0, "score"].tolist() == [1]


def test_duplicate_relation_reported(tmp_path):
    root = write_dataset_files(
        tmp_path / "d", [(0, "a"), (1, "b")], [(0, 1, "dep"), (1, 0, "dep")], [(0, 0)], [(0, 0, 1)]
    )
    dataset = load_directory(root)
    assert dataset.graph.dep_edges == ((0, 1),)
    assert len(dataset.dropped) == 1


@pytest.mark.parametrize(
    "responses, message",
    [
        ([(0, 0, 2)], "responses.csv:2: non-binary score"),
        ([(0, 0, 1), (0, 9, 1)], "responses.csv:3: unknown exercise id 9"),
        ([(0, 0, "yes")], "non-binary score"),
        ([(-1, 0, 1)], "responses.csv:2: malformed row"),
    ],
)
def test_bad_responses_name_file_and_line(tmp_path, responses, message):
    root = write_dataset_files(tmp_path / "d", [(0, "a")], [], [(0, 0)], responses)
    with pytest.raises(DataLoadError, match=message):
        load_directory(root)


def test_unknown_learner_with_declared_count(tmp_path):
    root = write_dataset_files(tmp_path / "d", [(0, "a")], [], [(0, 0)], [(0, 0, 1), (5, 0, 1)])
    with pytest.raises(DataLoadError, match="unknown learner id 5"):
        load_directory(root, learner_count=3)


def test_empty_qmatrix_row_rejected(tmp_path):
    root = write_dataset_files(tmp_path / "d", [(0, "a")], [], [(0, 0), (2, 0)], [])
    with pytest.raises(DataLoadError, match="exercise 1 has an empty Q-matrix row"):
        load_directory(root)


def test_unknown_concept_in_relations(tmp_path):
    root = write_dataset_files(tmp_path / "d", [(0, "a"), (1, "b")], [(0, 7, "prereq")], [(0, 0)], [])
    with pytest.raises(DataLoadError, match="relations.csv:2: unknown concept id 7"):
        load_directory(root)


def test_bad_relation_kind(tmp_path):
    root = write_dataset_files(tmp_path / "d", [(0, "a"), (1, "b")], [(0, 1, "causes")], [(0, 0)], [])
    with pytest.raises(DataLoadError, match="relation kind must be prereq or dep"):
        load_directory(root)


def test_sparse_concept_ids_rejected(tmp_path):
    root = write_dataset_files(tmp_path / "d", [(0, "a"), (2, "c")], [], [(0, 0)], [])
    with pytest.raises(DataLoadError, match="dense"):
        load_directory(root)


def test_missing_qmatrix_names_path(data_dir):
    (data_dir / "qmatrix.csv").unlink()
    with pytest.raises(FileNotFoundError, match="qmatrix.csv"):
        load_directory(data_dir)


def test_crlf_files_load(tmp_path, data_dir):
    for path in data_dir.iterdir():
        path.write_bytes(path.read_bytes().replace(b"\n", b"\r\n"))
    assert load_directory(data_dir).stats.logs == 7


def test_round_trip(tmp_path, data_dir):
    original = load_directory(data_dir)
    save_dataset(original, tmp_path / "copy")
    reloaded = load_directory(tmp_path / "copy")
    assert reloaded.graph == original.graph
    assert np.array_equal(reloaded.qmatrix.matrix, original.qmatrix.matrix)
    pd.testing.assert_frame_equal(reloaded.log.frame, original.log.frame)
    assert reloaded.stats == original.stats


# ── graph and Q-matrix ────────────────────────────────────────────────────────

def test_dep_edges_canonical_orientation():
    a = ConceptGraph(3, {}, (), ((2, 0), (1, 2)))
    b = ConceptGraph(3, {}, (), ((0, 2), (2, 1)))
    assert a.dep_edges == b.dep_edges == ((0, 2), (1, 2))


@pytest.mark.parametrize(
    "prereq, dep",
    [(((0, 0),), ()), (((0, 1), (0, 1)), ()), ((), ((0, 1), (1, 0))), (((0, 5),), ())],
)
def test_graph_invariants(prereq, dep):
    with pytest.raises(GraphError):
        ConceptGraph(3, {}, prereq, dep)


def test_relabel_keeps_edge_order():
    graph = ConceptGraph(3, {0: "a"}, ((0, 1), (1, 2)), ((0, 2),))
    moved = graph.relabel([2, 0, 1])
    assert moved.prereq_edges == ((2, 0), (0, 1))
    assert moved.dep_edges == ((1, 2),)
    assert moved.labels == {2: "a"}


def test_exercise_concepts():
    q = QMatrix(np.array([[0, 1, 1, 0], [1, 1, 1, 1]]))
    assert exercise_concepts(q, 0) == {1, 2}
    assert exercise_concepts(q, 1) == {0, 1, 2, 3}
    with pytest.raises(IndexError):
        exercise_concepts(q, 2)


def test_exercise_concepts_figure_style_composite():
    # three single-concept exercises and one covering all three
    q = QMatrix(np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]]))
    assert exercise_concepts(q, 3) == {0, 1, 2}


def test_qmatrix_rejects_empty_row_and_non_binary():
    with pytest.raises(ValueError, match="tests no concept"):
        QMatrix(np.array([[1, 0], [0, 0]]))
    with pytest.raises(ValueError, match="0 or 1"):
        QMatrix(np.array([[2, 0]]))


# ── splitting ─────────────────────────────────────────────────────────────────

def _log(pairs):
    return ResponseLog(pd.DataFrame(pairs, columns=["learner_id", "exercise_id", "score"]))


def test_split_single_learner_exact():
    log = _log([(0, e, e % 2) for e in range(10)])
    counts = split(log, (7, 1, 2), seed=3).frame["split"].value_counts()
    assert counts["train"] == 7
    assert counts["valid"] == 1
    assert counts["test"] == 2


def test_split_deterministic():
    log = _log([(n, e, (n + e) % 2) for n in range(5) for e in range(8)])
    a = split(log, seed=11).frame
    b = split(log, seed=11).frame
    pd.testing.assert_frame_equal(a, b)


def test_split_is_partition():
    log = _log([(n, e, (n * e) % 2) for n in range(7) for e in range(6)])
    frame = split(log, seed=0).frame
    assert len(frame) == len(log)
    assert set(frame["split"]) <= {"train", "valid", "test"}
    pd.testing.assert_frame_equal(
        frame[["learner_id", "exercise_id", "score"]], log.frame.reset_index(drop=True)
    )


def test_split_global_proportions():
    rng = np.random.default_rng(0)
    log = _log([(n, e, int(rng.random() < 0.5)) for n in range(100) for e in range(10)])
    shares = split(log, seed=5).frame["split"].value_counts(normalize=True)
    assert abs(shares["train"] - 0.7) <= 0.01
    assert abs(shares["valid"] - 0.1) <= 0.01
    assert abs(shares["test"] - 0.2) <= 0.01


def test_split_short_learners_go_to_train(caplog):
    log = _log([(0, 0, 1), (0, 1, 0), (1, 0, 1), (1, 1, 1), (1, 2, 0)])
    frame = split(log, seed=0).frame
    assert (frame.loc[frame["learner_id"] == 0, "split"] == "train").all()
    assert "fewer than 3 responses" in caplog.text


def test_split_rejects_non_positive_ratio():
    with pytest.raises(ValueError):
        split(_log([(0, 0, 1)]), (7, 0, 2))


def test_part_requires_split():
    with pytest.raises(ValueError, match="not been split"):
        _log([(0, 0, 1)]).part("train")


def test_dataset_summary(data_dir):
    table = dataset_summary(load_directory(data_dir).stats, "toy")
    assert table.loc["#learners", "toy"] == 3
    assert table.loc["#response logs", "toy"] == 7
