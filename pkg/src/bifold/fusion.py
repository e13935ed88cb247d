"""Combination rules for per-model class-probability vectors.

All rules take one probability vector per model, in model order, and return a
:class:`FusionResult`. Ties are always resolved to the first candidate in
iteration order (lowest class index, or lowest flat index for NWM) and flagged
through ``tie_broken``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import ShapeMismatch
from .labels import Method, as_method
from .profiles import ModelProfile, WeightVector, uwcs_weights

ProbabilityVector = tuple[float, ...]


@dataclass(frozen=True)
class FusionResult:
    predicted_class: int
    fused_scores: tuple[float, ...]
    method: Method
    winning_model: int | None = None
    tie_broken: bool = False


def _as_matrix(preds: Sequence[Sequence[float]]) -> list[list[float]]:
    rows = [[float(p) for p in vec] for vec in preds]
    if not rows:
        raise ShapeMismatch("need predictions from at least one model")
    k = len(rows[0])
    if k < 1:
        raise ShapeMismatch("probability vectors must have at least one class")
    for i, row in enumerate(rows):
        if len(row) != k:
            raise ShapeMismatch(f"model {i} has {len(row)} classes, model 0 has {k}")
    return rows


def _weights_for(weights: WeightVector | Sequence[float], n: int) -> list[float]:
    values = [float(w) for w in weights]
    if len(values) != n:
        raise ShapeMismatch(f"{len(values)} weights for {n} models")
    return values


def first_argmax(values: Sequence[float]) -> tuple[int, bool]:
    """Return the first index of the maximum and whether the maximum is shared."""
    best = 0
    tied = False
    for i in range(1, len(values)):
        if values[i] > values[best]:
            best = i
            tied = False
        elif values[i] == values[best]:
            tied = True
    return best, tied


def average_runs(runs: Sequence[Sequence[float]]) -> ProbabilityVector:
    """Per-class mean of repeated runs of the same model."""
    rows = _as_matrix(runs)
    n = len(rows)
    return tuple(sum(row[k] for row in rows) / n for k in range(len(rows[0])))


def _weighted_sum(rows: list[list[float]], weights: list[float], method: Method) -> FusionResult:
    k = len(rows[0])
    scores = [0.0] * k
    for w, row in zip(weights, rows):
        for c in range(k):
            scores[c] += w * row[c]
    cls, tied = first_argmax(scores)
    return FusionResult(cls, tuple(scores), method, tie_broken=tied)


def soft_vote(preds: Sequence[Sequence[float]]) -> FusionResult:
    """Equal-weight soft voting: argmax of the per-class mean probability."""
    rows = _as_matrix(preds)
    n = len(rows)
    return _weighted_sum(rows, [1.0 / n] * n, Method.SOFT)


def weighted_soft_vote(preds: Sequence[Sequence[float]],
                       weights: WeightVector | Sequence[float],
                       method: Method = Method.UWM) -> FusionResult:
    """Soft voting where model ``i`` contributes ``weights[i] * probs_i``.

    With user-supplied weights this is UWM; with UWCS weights it is ESVT.
    """
    rows = _as_matrix(preds)
    return _weighted_sum(rows, _weights_for(weights, len(rows)), as_method(method))


def esvt_fuse(preds: Sequence[Sequence[float]],
              profiles: Sequence[ModelProfile]) -> FusionResult:
    rows = _as_matrix(preds)
    weights = uwcs_weights(profiles)
    return _weighted_sum(rows, _weights_for(weights, len(rows)), Method.ESVT)


def decode_flat_index(flat: int, class_count: int) -> tuple[int, int]:
    """Split a model-major flat index into ``(class_index, model_index)``."""
    model, cls = divmod(flat, class_count)
    return cls, model


def nwm_fuse(preds: Sequence[Sequence[float]],
             weights: WeightVector | Sequence[float]) -> FusionResult:
    """Pick the class of the single largest ``weight * probability`` entry.

    Entries are scanned model-major (all classes of model 0, then model 1, ...),
    so the flat index decodes to class ``flat % K`` and model ``flat // K``.
    ``fused_scores`` holds the per-class maximum weighted entry.
    """
    rows = _as_matrix(preds)
    w = _weights_for(weights, len(rows))
    k = len(rows[0])
    flat = [w[i] * rows[i][c] for i in range(len(rows)) for c in range(k)]
    best, tied = first_argmax(flat)
    cls, model = decode_flat_index(best, k)
    per_class = tuple(max(flat[i * k + c] for i in range(len(rows))) for c in range(k))
    return FusionResult(cls, per_class, Method.NWM, winning_model=model, tie_broken=tied)


def hard_vote(preds: Sequence[Sequence[float]]) -> FusionResult:
    """Majority vote over each model's argmax class.

    ``fused_scores`` is the fraction of votes per class. ``tie_broken`` is set
    when the vote count is tied or any single model's argmax was tied.
    """
    rows = _as_matrix(preds)
    k = len(rows[0])
    counts = [0] * k
    model_tie = False
    for row in rows:
        vote, tied = first_argmax(row)
        counts[vote] += 1
        model_tie = model_tie or tied
    cls, vote_tie = first_argmax(counts)
    n = len(rows)
    return FusionResult(cls, tuple(c / n for c in counts), Method.HARD,
                        tie_broken=vote_tie or model_tie)


def fuse(method: Method | str, preds: Sequence[Sequence[float]],
         weights: WeightVector | Sequence[float] | None = None) -> FusionResult:
    """Dispatch to the rule named by ``method``.

    ``weights`` is required for uwm, esvt and nwm; for esvt it should be the
    UWCS vector of the models (see :func:`esvt_fuse` to start from profiles).
    """
    method = as_method(method)
    if method is Method.SOFT:
        return soft_vote(preds)
    if method is Method.HARD:
        return hard_vote(preds)
    if weights is None:
        raise ValueError(f"method {method.value} needs model weights")
    if method is Method.NWM:
        return nwm_fuse(preds, weights)
    return weighted_soft_vote(preds, weights, method)
