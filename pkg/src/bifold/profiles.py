"""Model quality profiles and F1-proportional (UWCS) weighting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .errors import DegenerateWeights, InvalidProfile, InvalidWeights, ShapeMismatch, StageMismatch
from .labels import Stage, as_stage

# Sums within this distance of 1 are accepted as already normalized.
USER_WEIGHT_TOLERANCE = 1e-6


def average_f1(per_class_f1: Sequence[float]) -> float:
    """Macro-average a model's per-class F1 scores."""
    values = [float(v) for v in per_class_f1]
    if not values:
        raise InvalidProfile("per_class_f1 is empty")
    for v in values:
        if not 0.0 <= v <= 1.0 or math.isnan(v):
            raise InvalidProfile(f"F1 value {v!r} outside [0, 1]")
    return math.fsum(values) / len(values)


@dataclass(frozen=True)
class ModelProfile:
    """A model's identity and its F1 quality for one stage.

    Either ``per_class_f1`` or ``f1_average`` may be given; when only the
    per-class list is supplied the average is derived from it.
    """

    model_id: str
    stage: Stage
    per_class_f1: tuple[float, ...] | None = None
    f1_average: float = field(default=float("nan"))

    def __post_init__(self) -> None:
        object.__setattr__(self, "stage", as_stage(self.stage))
        if not self.model_id:
            raise InvalidProfile("model_id must be a non-empty string")
        if self.per_class_f1 is not None:
            per_class = tuple(float(v) for v in self.per_class_f1)
            if len(per_class) != self.stage.class_count:
                raise InvalidProfile(
                    f"{self.model_id}: {self.stage.value} profiles need "
                    f"{self.stage.class_count} per-class F1 values, got {len(per_class)}"
                )
            mean = average_f1(per_class)
            object.__setattr__(self, "per_class_f1", per_class)
            if math.isnan(self.f1_average):
                object.__setattr__(self, "f1_average", mean)
            elif abs(self.f1_average - mean) > 1e-9:
                raise InvalidProfile(
                    f"{self.model_id}: f1_average {self.f1_average} != mean of per_class_f1 {mean}"
                )
        else:
            avg = float(self.f1_average)
            if math.isnan(avg) or not 0.0 <= avg <= 1.0:
                raise InvalidProfile(f"{self.model_id}: f1_average {avg!r} outside [0, 1]")
            object.__setattr__(self, "f1_average", avg)


@dataclass(frozen=True)
class WeightVector:
    """Per-model weights in model (manifest) order.

    ``stage`` is ``None`` for weights that are not tied to a stage, e.g. user
    weights reused for both stages. ``normalized`` records whether the
    supplied values had to be rescaled to sum to one.
    """

    weights: tuple[float, ...]
    stage: Stage | None = None
    model_ids: tuple[str, ...] | None = None
    normalized: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if self.stage is not None:
            object.__setattr__(self, "stage", as_stage(self.stage))
        if self.model_ids is not None:
            object.__setattr__(self, "model_ids", tuple(self.model_ids))
            if len(self.model_ids) != len(self.weights):
                raise ShapeMismatch(f"{len(self.weights)} weights for {len(self.model_ids)} models")

    def __len__(self) -> int:
        return len(self.weights)

    def __iter__(self):
        return iter(self.weights)

    def __getitem__(self, i: int) -> float:
        return self.weights[i]

    @classmethod
    def uniform(cls, n: int, stage: Stage | None = None,
                model_ids: Sequence[str] | None = None) -> "WeightVector":
        if n < 1:
            raise InvalidWeights("need at least one model")
        return cls((1.0 / n,) * n, stage=stage,
                   model_ids=tuple(model_ids) if model_ids is not None else None)


def uwcs_weights(profiles: Sequence[ModelProfile]) -> WeightVector:
    """Weight each model by its share of the summed average F1.

    ``w_i = f1_i / sum_j f1_j`` over the profiles, which must all belong to
    the same stage.

    Raises:
        InvalidProfile: no profiles were given.
        StageMismatch: the profiles mix detection and classification.
        DegenerateWeights: every average F1 is zero.
    """
    if not profiles:
        raise InvalidProfile("uwcs_weights needs at least one profile")
    stage = profiles[0].stage
    for p in profiles[1:]:
        if p.stage is not stage:
            raise StageMismatch(
                f"profile {p.model_id} is {p.stage.value}, expected {stage.value}"
            )
    scores = [p.f1_average for p in profiles]
    total = math.fsum(scores)
    if total <= 0.0:
        raise DegenerateWeights(f"{stage.value}: every model has average F1 of 0")
    return WeightVector(
        tuple(s / total for s in scores),
        stage=stage,
        model_ids=tuple(p.model_id for p in profiles),
    )


def validate_user_weights(weights: Sequence[float], stage: Stage | None = None,
                          model_ids: Sequence[str] | None = None) -> WeightVector:
    """Check externally supplied weights, rescaling them if they do not sum to 1."""
    values = [float(w) for w in weights]
    if not values:
        raise InvalidWeights("no weights given")
    for w in values:
        if math.isnan(w) or math.isinf(w):
            raise InvalidWeights(f"weight {w!r} is not finite")
        if w < 0:
            raise InvalidWeights(f"negative weight {w!r}")
    total = math.fsum(values)
    if total == 0.0:
        raise InvalidWeights("weights are all zero")
    rescale = abs(total - 1.0) > USER_WEIGHT_TOLERANCE
    if rescale:
        values = [w / total for w in values]
    return WeightVector(tuple(values), stage=stage,
                        model_ids=tuple(model_ids) if model_ids is not None else None,
                        normalized=rescale)
