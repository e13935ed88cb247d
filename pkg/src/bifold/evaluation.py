"""Scoring outcome files against ground truth."""

from __future__ import annotations

from typing import Sequence

from .dataio import GroundTruth, OutcomeRow
from .errors import InstanceMismatch
from .labels import CLASSIFICATION_CLASSES, DETECTION_CLASSES, FINAL_LABELS, NOTUMOR, Stage
from .metrics import EvaluationReport, build_confusion, evaluate

VIEWS = ("bifold", "detection", "classification")


def _align(outcomes: Sequence[OutcomeRow], truth: Sequence[GroundTruth]
           ) -> list[tuple[OutcomeRow, str]]:
    by_id = {t.instance_id: t.label for t in truth}
    out_ids = {o.instance_id for o in outcomes}
    missing_truth = sorted(out_ids - set(by_id))
    missing_out = sorted(set(by_id) - out_ids)
    if missing_truth or missing_out:
        parts = []
        if missing_truth:
            parts.append(f"no truth for {missing_truth[:5]}{'...' if len(missing_truth) > 5 else ''}")
        if missing_out:
            parts.append(f"no outcome for {missing_out[:5]}{'...' if len(missing_out) > 5 else ''}")
        raise InstanceMismatch("; ".join(parts))
    return [(o, by_id[o.instance_id]) for o in sorted(outcomes, key=lambda o: o.instance_id)]


def evaluate_outcomes(outcomes: Sequence[OutcomeRow], truth: Sequence[GroundTruth],
                      view: str | Stage = "bifold") -> EvaluationReport:
    """Build a report for one of three views of the cascade.

    * ``bifold``: 4x4 matrix of true vs final label over every instance.
    * ``detection``: 2x2 tumor/notumor matrix from the detection class.
    * ``classification``: true-tumor instances only, 3 subtype rows against
      the 4 final labels (gated-out tumors land in the notumor column).
    """
    view = view.value if isinstance(view, Stage) else view
    if view not in VIEWS:
        raise ValueError(f"unknown evaluation view {view!r}")
    aligned = _align(outcomes, truth)
    if view == "detection":
        pairs = [("notumor" if t == NOTUMOR else "tumor", DETECTION_CLASSES[o.detection_class])
                 for o, t in aligned]
        m = build_confusion(pairs, DETECTION_CLASSES)
        ties = sum(o.tie_broken for o, _ in aligned)
    elif view == "classification":
        kept = [(o, t) for o, t in aligned if t != NOTUMOR]
        m = build_confusion([(t, o.final_label) for o, t in kept], CLASSIFICATION_CLASSES,
                            FINAL_LABELS)
        ties = sum(o.tie_broken for o, _ in kept)
    else:
        m = build_confusion([(t, o.final_label) for o, t in aligned], FINAL_LABELS)
        ties = sum(o.tie_broken for o, _ in aligned)
    return evaluate(m, ties)
