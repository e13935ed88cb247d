"""Confusion matrices, accuracy/precision/recall/F1, and evaluation reports.

Matrices may be rectangular: the bi-fold classification view has the three
true subtype rows against four predicted columns (the extra ``notumor`` column
holds tumors the detection gate sent away). A cell counts as correct when its
row label equals its column label.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .errors import EmptyEvaluation, UnknownLabel
from .labels import Stage, as_stage
from .profiles import ModelProfile


@dataclass(frozen=True)
class ConfusionMatrix:
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "row_labels", tuple(self.row_labels))
        object.__setattr__(self, "col_labels", tuple(self.col_labels))
        grid = tuple(tuple(int(c) for c in row) for row in self.counts)
        if len(grid) != len(self.row_labels) or any(len(r) != len(self.col_labels) for r in grid):
            raise ValueError("counts shape does not match the label sets")
        if any(c < 0 for r in grid for c in r):
            raise ValueError("confusion counts must be nonnegative")
        object.__setattr__(self, "counts", grid)

    @classmethod
    def square(cls, labels: Sequence[str], counts: Sequence[Sequence[int]]) -> "ConfusionMatrix":
        return cls(tuple(labels), tuple(labels), tuple(tuple(r) for r in counts))

    @property
    def labels(self) -> tuple[str, ...]:
        """Row labels followed by any column-only labels."""
        return self.row_labels + tuple(c for c in self.col_labels if c not in self.row_labels)

    @property
    def total(self) -> int:
        return sum(sum(r) for r in self.counts)

    @property
    def correct(self) -> int:
        return sum(
            self.counts[r][self.col_labels.index(label)]
            for r, label in enumerate(self.row_labels)
            if label in self.col_labels
        )

    def cell(self, true_label: str, predicted_label: str) -> int:
        return self.counts[self.row_labels.index(true_label)][self.col_labels.index(predicted_label)]


@dataclass(frozen=True)
class ClassMetrics:
    label: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvaluationReport:
    confusion: ConfusionMatrix
    accuracy: float
    per_class: tuple[ClassMetrics, ...]
    macro_f1: float
    tie_count: int = 0

    @property
    def accuracy_percent(self) -> str:
        return percent_half_up(self.confusion.correct, self.confusion.total)


def build_confusion(pairs: Iterable[tuple[str, str]], labels: Sequence[str],
                    predicted_labels: Sequence[str] | None = None) -> ConfusionMatrix:
    """Count ``(true, predicted)`` pairs.

    ``predicted_labels`` defaults to ``labels``; pass a wider set for a
    rectangular matrix.
    """
    rows = tuple(labels)
    cols = tuple(predicted_labels) if predicted_labels is not None else rows
    r_index = {label: i for i, label in enumerate(rows)}
    c_index = {label: i for i, label in enumerate(cols)}
    grid = [[0] * len(cols) for _ in rows]
    for true, pred in pairs:
        if true not in r_index:
            raise UnknownLabel(f"true label {true!r} not in {list(rows)}")
        if pred not in c_index:
            raise UnknownLabel(f"predicted label {pred!r} not in {list(cols)}")
        grid[r_index[true]][c_index[pred]] += 1
    return ConfusionMatrix(rows, cols, tuple(tuple(r) for r in grid))


def accuracy_fraction(m: ConfusionMatrix) -> Fraction:
    if m.total == 0:
        raise EmptyEvaluation("confusion matrix is empty")
    return Fraction(m.correct, m.total)


def accuracy(m: ConfusionMatrix) -> float:
    return float(accuracy_fraction(m))


def percent_half_up(numerator: int, denominator: int, places: int = 2) -> str:
    """Exact ``100 * numerator / denominator`` rounded half-up, as a string."""
    if denominator <= 0:
        raise EmptyEvaluation("no instances to score")
    scale = 10 ** places
    q, r = divmod(numerator * 100 * scale, denominator)
    if 2 * r >= denominator:
        q += 1
    whole, frac = divmod(q, scale)
    return f"{whole}.{frac:0{places}d}" if places else str(whole)


def _f1(precision: float, recall: float) -> float:
    s = precision + recall
    return 2 * precision * recall / s if s > 0 else 0.0


def per_class_metrics(m: ConfusionMatrix) -> tuple[ClassMetrics, ...]:
    """Precision, recall and F1 for every true (row) label.

    Empty rows or columns score 0 rather than raising.
    """
    if m.total == 0:
        raise EmptyEvaluation("confusion matrix is empty")
    out = []
    for r, label in enumerate(m.row_labels):
        row_total = sum(m.counts[r])
        if label in m.col_labels:
            c = m.col_labels.index(label)
            hit = m.counts[r][c]
            col_total = sum(row[c] for row in m.counts)
        else:
            hit = col_total = 0
        precision = hit / col_total if col_total else 0.0
        recall = hit / row_total if row_total else 0.0
        out.append(ClassMetrics(label, precision, recall, _f1(precision, recall), row_total))
    return tuple(out)


def evaluate(m: ConfusionMatrix, tie_count: int = 0) -> EvaluationReport:
    per_class = per_class_metrics(m)
    macro = sum(c.f1 for c in per_class) / len(per_class)
    return EvaluationReport(m, accuracy(m), per_class, macro, tie_count)


def profiles_from_validation(pairs_by_model: Mapping[str, Sequence[tuple[int | str, int | str]]],
                             stage: Stage | str,
                             labels: Sequence[str] | None = None) -> tuple[ModelProfile, ...]:
    """Build stage profiles from each model's own validation predictions.

    ``pairs_by_model`` maps model id to ``(true, predicted)`` pairs, given either
    as labels or as class indices into ``labels`` (default: the stage classes).
    Model order follows the mapping's iteration order.
    """
    stage = as_stage(stage)
    labels = tuple(labels) if labels is not None else stage.class_names
    profiles = []
    for model_id, pairs in pairs_by_model.items():
        named = [
            (labels[t] if isinstance(t, int) else t, labels[p] if isinstance(p, int) else p)
            for t, p in pairs
        ]
        if not named:
            raise EmptyEvaluation(f"model {model_id!r} has no validation pairs")
        metrics = per_class_metrics(build_confusion(named, labels))
        profiles.append(ModelProfile(model_id, stage, tuple(c.f1 for c in metrics)))
    return tuple(profiles)


def report_to_dict(report: EvaluationReport) -> dict:
    m = report.confusion
    return {
        "row_labels": list(m.row_labels),
        "col_labels": list(m.col_labels),
        "confusion": [list(r) for r in m.counts],
        "total": m.total,
        "correct": m.correct,
        "accuracy": report.accuracy,
        "accuracy_percent": report.accuracy_percent,
        "per_class": [
            {
                "label": c.label,
                "precision": c.precision,
                "recall": c.recall,
                "f1": c.f1,
                "support": c.support,
            }
            for c in report.per_class
        ],
        "macro_f1": report.macro_f1,
        "tie_count": report.tie_count,
    }


def report_from_dict(data: Mapping) -> EvaluationReport:
    m = ConfusionMatrix(tuple(data["row_labels"]), tuple(data["col_labels"]),
                        tuple(tuple(r) for r in data["confusion"]))
    per_class = tuple(
        ClassMetrics(c["label"], c["precision"], c["recall"], c["f1"], c["support"])
        for c in data["per_class"]
    )
    return EvaluationReport(m, data["accuracy"], per_class, data["macro_f1"], data["tie_count"])


def format_report(report: EvaluationReport) -> str:
    """Aligned plain-text rendering of a report."""
    m = report.confusion
    width = max(8, *(len(label) for label in m.labels), *(len(str(c)) for r in m.counts for c in r))
    lines = [" " * width + " | " + " ".join(f"{c:>{width}}" for c in m.col_labels)]
    lines.append("-" * len(lines[0]))
    for label, row in zip(m.row_labels, m.counts):
        lines.append(f"{label:<{width}} | " + " ".join(f"{c:>{width}}" for c in row))
    lines.append("")
    lines.append(f"accuracy  {report.accuracy_percent}%  ({m.correct}/{m.total})")
    lines.append(f"macro_f1  {report.macro_f1:.5f}")
    lines.append(f"ties      {report.tie_count}")
    lines.append("")
    lines.append(f"{'label':<{width}}  precision     recall         f1  support")
    for c in report.per_class:
        lines.append(
            f"{c.label:<{width}}  {c.precision:9.5f}  {c.recall:9.5f}  {c.f1:9.5f}  {c.support:7d}"
        )
    return "\n".join(lines) + "\n"
