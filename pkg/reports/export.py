"""Diagnosis JSON, radar chart SVG and metric tables."""
from __future__ import annotations

import io
import logging

import matplotlib

matplotlib.use("Agg")

import numpy as np
import pandas as pd
from matplotlib.figure import Figure

from core.utils import write_atomic, write_json_atomic
from models.fusion import CognitiveDiagnosis
from training.metrics import METRIC_COLUMNS

logger = logging.getLogger(__name__)

RADAR_EDGES = 5
KUS_KINDS = ("prereq", "dep")


def diagnosis_payload(diagnoses: list[CognitiveDiagnosis], labels: dict[int, str] | None = None) -> list[dict]:
    return [d.to_dict(labels) for d in diagnoses]


def validate_payload(entry: dict) -> None:
    """Raise ValueError unless `entry` follows the diagnosis export layout."""
    if set(entry) != {"learner_id", "ks", "kus"}:
        raise ValueError(f"diagnosis keys must be learner_id, ks, kus; got {sorted(entry)}")
    if not isinstance(entry["learner_id"], int):
        raise ValueError("learner_id must be an integer")
    for item in entry["ks"]:
        if set(item) != {"concept_id", "name", "score"} or not 0.0 < item["score"] < 1.0:
            raise ValueError(f"malformed ks entry {item}")
    for item in entry["kus"]:
        if set(item) != {"src", "dst", "kind", "score"} or item["kind"] not in KUS_KINDS:
            raise ValueError(f"malformed kus entry {item}")
        if not 0.0 < item["score"] < 1.0:
            raise ValueError(f"kus score out of range in {item}")


def write_diagnoses(diagnoses: list[CognitiveDiagnosis], path, labels: dict[int, str] | None = None):
    payload = diagnosis_payload(diagnoses, labels)
    for entry in payload:
        validate_payload(entry)
    return write_json_atomic(path, payload[0] if len(payload) == 1 else payload)


def radar_axes(diagnosis: CognitiveDiagnosis, labels: dict[int, str] | None = None, edges: int = RADAR_EDGES):
    labels = labels or {}
    names = [f"KS {labels.get(c, str(c))}" for c in range(len(diagnosis.ks))]
    values = [float(v) for v in diagnosis.ks]
    for edge in diagnosis.weakest_edges(edges):
        arrow = "->" if edge.kind == "prereq" else "<->"
        names.append(f"KUS {edge.src}{arrow}{edge.dst}")
        values.append(edge.score)
    return names, values


def radar_svg(diagnosis: CognitiveDiagnosis, labels: dict[int, str] | None = None, edges: int = RADAR_EDGES) -> str:
    """Static radar chart with one axis per concept plus the learner's weakest relations."""
    names, values = radar_axes(diagnosis, labels, edges)
    angles = np.linspace(0.0, 2.0 * np.pi, len(names), endpoint=False)
    closed_angles = np.append(angles, angles[:1])
    closed_values = np.append(values, values[:1])

    fig = Figure(figsize=(7, 7))
    ax = fig.add_subplot(projection="polar")
    ax.plot(closed_angles, closed_values, color="tab:blue", linewidth=1.5)
    ax.fill(closed_angles, closed_values, color="tab:blue", alpha=0.2)
    ax.set_xticks(angles)
    ax.set_xticklabels(names, fontsize=7)
    ax.set_ylim(0.0, 1.0)
    ax.set_title(f"Cognitive structure of learner {diagnosis.learner_id}")

    buffer = io.StringIO()
    with matplotlib.rc_context({"svg.hashsalt": "cscd", "svg.fonttype": "none"}):
        fig.savefig(buffer, format="svg", metadata={"Date": None})
    return buffer.getvalue()


def write_radar(diagnosis: CognitiveDiagnosis, path, labels: dict[int, str] | None = None, edges: int = RADAR_EDGES):
    path = write_atomic(path, radar_svg(diagnosis, labels, edges))
    logger.info("Wrote radar chart for learner %d to %s", diagnosis.learner_id, path)
    return path


def metrics_table(rows: list[dict]) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=METRIC_COLUMNS)


def metrics_csv(rows: list[dict], header: bool = True) -> str:
    return metrics_table(rows).to_csv(index=False, header=header, lineterminator="\n", float_format="%.4f")
