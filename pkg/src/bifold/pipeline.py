"""Two-stage cascade: a tumor/no-tumor ensemble gates a subtype ensemble."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence, Union

from .dataio import Manifest, PredictionTable
from .errors import InvalidWeights, MissingPredictions, ShapeMismatch, StageMismatch
from .fusion import FusionResult, fuse
from .labels import CLASSIFICATION_CLASSES, NOTUMOR, Method, Stage, as_method
from .profiles import ModelProfile, WeightVector, uwcs_weights

TUMOR_CLASS = 0

WeightSource = Union[WeightVector, str, None]
"""A resolved vector, ``"uwcs"``, ``"uniform"``, or ``None`` for the method's default."""


@dataclass(frozen=True)
class BiFoldConfig:
    """Fusion settings for both stages.

    ``classification_method`` defaults to ``method``. When a weight source is
    left as ``None`` it defaults to ``"uwcs"`` for esvt/nwm and to uniform
    for soft/hard; uwm has no default and needs an explicit vector.
    """

    method: Method
    detection_weights: WeightSource = None
    classification_weights: WeightSource = None
    classification_method: Method | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", as_method(self.method))
        if self.classification_method is not None:
            object.__setattr__(self, "classification_method", as_method(self.classification_method))
        for src in (self.detection_weights, self.classification_weights):
            if isinstance(src, str) and src not in ("uwcs", "uniform"):
                raise InvalidWeights(f"unknown weight source {src!r}")

    def method_for(self, stage: Stage) -> Method:
        if stage is Stage.CLASSIFICATION and self.classification_method is not None:
            return self.classification_method
        return self.method

    def source_for(self, stage: Stage) -> WeightSource:
        return self.detection_weights if stage is Stage.DETECTION else self.classification_weights

    def resolve(self, stage: Stage, n_models: int,
                profiles: Sequence[ModelProfile] | None = None) -> WeightVector | None:
        """Turn this stage's weight source into a vector (``None`` for soft/hard)."""
        method = self.method_for(stage)
        if method in (Method.SOFT, Method.HARD):
            return None
        source = self.source_for(stage)
        if source is None:
            if method is Method.UWM:
                raise InvalidWeights(f"uwm needs explicit {stage.value} weights")
            source = "uwcs"
        if source == "uniform":
            return WeightVector.uniform(n_models, stage)
        if source == "uwcs":
            if not profiles:
                raise InvalidWeights(f"{method.value} needs {stage.value} model profiles for UWCS")
            weights = uwcs_weights(profiles)
        else:
            assert isinstance(source, WeightVector)
            weights = source
        if len(weights) != n_models:
            raise ShapeMismatch(f"{len(weights)} {stage.value} weights for {n_models} models")
        return weights


@dataclass(frozen=True)
class BiFoldOutcome:
    instance_id: str
    final_label: str
    detection_result: FusionResult
    classification_result: FusionResult | None = None

    @property
    def detection_class(self) -> int:
        return self.detection_result.predicted_class

    @property
    def tie_broken(self) -> bool:
        cls_tie = self.classification_result is not None and self.classification_result.tie_broken
        return self.detection_result.tie_broken or cls_tie


def _check_classes(preds: Sequence[Sequence[float]], k: int, stage: Stage) -> None:
    for vec in preds:
        if len(vec) != k:
            raise ShapeMismatch(f"{stage.value} vectors need {k} classes, got {len(vec)}")


def run_instance(det_preds: Sequence[Sequence[float]],
                 cls_preds: Sequence[Sequence[float]] | None,
                 config: BiFoldConfig,
                 det_weights: WeightVector | None = None,
                 cls_weights: WeightVector | None = None,
                 instance_id: str = "") -> BiFoldOutcome:
    """Run one instance through the cascade.

    The classification ensemble is only evaluated when detection predicts
    tumor (class 0); ``cls_preds`` may be ``None`` otherwise. Weights must
    already be resolved (see :meth:`BiFoldConfig.resolve`).
    """
    _check_classes(det_preds, Stage.DETECTION.class_count, Stage.DETECTION)
    det = fuse(config.method_for(Stage.DETECTION), det_preds, det_weights)
    if det.predicted_class != TUMOR_CLASS:
        return BiFoldOutcome(instance_id, NOTUMOR, det, None)
    if not cls_preds:
        raise MissingPredictions(instance_id)
    _check_classes(cls_preds, Stage.CLASSIFICATION.class_count, Stage.CLASSIFICATION)
    cls = fuse(config.method_for(Stage.CLASSIFICATION), cls_preds, cls_weights)
    return BiFoldOutcome(instance_id, CLASSIFICATION_CLASSES[cls.predicted_class], det, cls)


def _model_order(table: PredictionTable, profiles: Sequence[ModelProfile] | None,
                 source: WeightSource) -> tuple[str, ...]:
    if profiles:
        order = tuple(p.model_id for p in profiles)
    elif isinstance(source, WeightVector) and source.model_ids is not None:
        order = source.model_ids
    else:
        return table.model_ids()
    unknown = set(table.model_ids()) - set(order)
    if unknown:
        raise ShapeMismatch(
            f"{table.stage.value} predictions name models {sorted(unknown)} "
            f"that are not in the model list {list(order)}"
        )
    return order


def _stack(per_model: dict[str, tuple[float, ...]] | None, order: Sequence[str],
           instance_id: str, stage: Stage) -> list[tuple[float, ...]] | None:
    if not per_model:
        return None
    missing = [m for m in order if m not in per_model]
    if missing:
        raise MissingPredictions(instance_id, f"{stage.value} rows missing for models {missing}")
    return [per_model[m] for m in order]


def run_batch(detection_table: PredictionTable,
              classification_table: PredictionTable | None,
              config: BiFoldConfig,
              manifest: Manifest | None = None,
              max_workers: int | None = None) -> list[BiFoldOutcome]:
    """Apply the cascade to every instance in the detection table.

    Models are ordered by the manifest when given, else by the weight
    vector's ``model_ids``, else by first appearance in each table. Repeated
    runs of a model are averaged before fusion. Output is sorted by
    ``instance_id`` regardless of ``max_workers``.
    """
    if detection_table.stage is not Stage.DETECTION:
        raise StageMismatch("detection_table must hold detection predictions")
    if classification_table is None:
        classification_table = PredictionTable(Stage.CLASSIFICATION)
    if classification_table.stage is not Stage.CLASSIFICATION:
        raise StageMismatch("classification_table must hold classification predictions")
    if not len(detection_table):
        return []

    det_profiles = manifest.detection if manifest else None
    cls_profiles = manifest.classification if manifest else None
    det_order = _model_order(detection_table, det_profiles, config.detection_weights)
    cls_order = _model_order(classification_table, cls_profiles, config.classification_weights)

    det_weights = config.resolve(Stage.DETECTION, len(det_order), det_profiles)
    # With no classification models known there is nothing to weight; any
    # gate-passed instance then fails with MissingPredictions.
    cls_weights = (config.resolve(Stage.CLASSIFICATION, len(cls_order), cls_profiles)
                   if cls_order else None)

    det_avg = detection_table.averaged()
    cls_avg = classification_table.averaged()

    def one(iid: str) -> BiFoldOutcome:
        det_preds = _stack(det_avg.get(iid), det_order, iid, Stage.DETECTION)
        assert det_preds is not None
        cls_preds = None
        if iid in cls_avg:
            cls_preds = _stack(cls_avg[iid], cls_order, iid, Stage.CLASSIFICATION)
        return run_instance(det_preds, cls_preds, config, det_weights, cls_weights, iid)

    ids = sorted(det_avg)
    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(one, ids))
    return [one(iid) for iid in ids]
