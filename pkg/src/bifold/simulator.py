"""Synthetic classifier outputs with controllable per-model skill.

Randomness comes only from :class:`random.Random` (MT19937) seeded with the
spec's integer seed, and only through ``random()`` draws, so a seed yields the
same tables on every platform and Python version. For each instance (in id
order), each model (in spec order) and each run, the draws are:

1. ``u``: the model is correct when ``u < correct_prob[true_class]``;
2. if wrong, one draw picks a wrong class uniformly (``floor(r * (K-1))``
   into the other classes in index order);
3. peak mass ``0.5 + 0.5 * (1 - r) ** (1 / concentration)``, which lies in
   (0.5, 1] so the picked class is always the strict argmax;
4. ``K - 1`` draws ``e_j = -log(1 - r)`` split the remaining mass over the
   other classes in proportion to ``e_j`` (a symmetric Dirichlet(1) split).
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from typing import Mapping, Sequence

from .dataio import GroundTruth, PathLike, PredictionRecord, PredictionTable
from .errors import InvalidSpec
from .fusion import first_argmax
from .labels import CLASSIFICATION_CLASSES, FINAL_LABELS, NOTUMOR, Stage, as_stage


@dataclass(frozen=True)
class SyntheticModel:
    model_id: str
    correct_prob: tuple[float, ...]
    concentration: float = 4.0
    runs: int = 1


@dataclass(frozen=True)
class SyntheticSpec:
    stage: Stage
    counts: tuple[int, ...]
    models: tuple[SyntheticModel, ...]
    seed: int = 0
    id_prefix: str = "x"


@dataclass(frozen=True)
class BiFoldSyntheticSpec:
    """Joint spec: four-way truth counts plus a model list per stage."""

    counts: Mapping[str, int]
    detection: tuple[SyntheticModel, ...]
    classification: tuple[SyntheticModel, ...]
    seed: int = 0
    id_prefix: str = "b"


def _model(entry: Mapping | SyntheticModel, k: int) -> SyntheticModel:
    if isinstance(entry, SyntheticModel):
        raw = entry
        mid, cp, conc, runs = raw.model_id, raw.correct_prob, raw.concentration, raw.runs
    else:
        if not isinstance(entry, Mapping):
            raise InvalidSpec(f"model entry must be an object, got {entry!r}")
        unknown = set(entry) - {"model_id", "correct_prob", "concentration", "runs"}
        if unknown:
            raise InvalidSpec(f"unknown model keys {sorted(unknown)}")
        mid = entry.get("model_id")
        cp = entry.get("correct_prob")
        conc = entry.get("concentration", 4.0)
        runs = entry.get("runs", 1)
    if not isinstance(mid, str) or not mid:
        raise InvalidSpec("model_id must be a non-empty string")
    if isinstance(cp, (int, float)) and not isinstance(cp, bool):
        cp = (float(cp),) * k
    try:
        cp = tuple(float(v) for v in cp)  # type: ignore[union-attr]
    except TypeError:
        raise InvalidSpec(f"{mid}: correct_prob must be a number or a list") from None
    if len(cp) != k:
        raise InvalidSpec(f"{mid}: correct_prob needs {k} entries, got {len(cp)}")
    if any(math.isnan(v) or not 0.0 <= v <= 1.0 for v in cp):
        raise InvalidSpec(f"{mid}: correct_prob values must lie in [0, 1]")
    try:
        conc = float(conc)
    except (TypeError, ValueError):
        raise InvalidSpec(f"{mid}: concentration must be a number") from None
    if not conc > 0 or math.isinf(conc):
        raise InvalidSpec(f"{mid}: concentration must be positive and finite")
    if not isinstance(runs, int) or isinstance(runs, bool) or runs < 1:
        raise InvalidSpec(f"{mid}: runs must be an integer >= 1")
    return SyntheticModel(mid, cp, conc, runs)


def _counts(raw: Sequence[int] | Mapping[str, int], names: Sequence[str]) -> tuple[int, ...]:
    if isinstance(raw, Mapping):
        unknown = set(raw) - set(names)
        if unknown:
            raise InvalidSpec(f"unknown labels in counts: {sorted(unknown)}")
        values = [raw.get(n, 0) for n in names]
    else:
        values = list(raw)
        if len(values) != len(names):
            raise InvalidSpec(f"counts needs {len(names)} entries, got {len(values)}")
    for v in values:
        if not isinstance(v, int) or isinstance(v, bool) or v < 0:
            raise InvalidSpec(f"counts must be nonnegative integers, got {v!r}")
    return tuple(values)


def _seed(value: object) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise InvalidSpec(f"seed must be an integer, got {value!r}")
    return value


def validate_spec(spec: SyntheticSpec) -> SyntheticSpec:
    stage = as_stage(spec.stage)
    k = stage.class_count
    models = tuple(_model(m, k) for m in spec.models)
    if not models:
        raise InvalidSpec("spec needs at least one model")
    ids = [m.model_id for m in models]
    if len(set(ids)) != len(ids):
        raise InvalidSpec(f"duplicate model ids {ids}")
    return SyntheticSpec(stage, _counts(spec.counts, stage.class_names), models,
                         _seed(spec.seed), spec.id_prefix)


def _draw_vector(rng: random.Random, k: int, target: int, concentration: float) -> tuple[float, ...]:
    peak = 0.5 + 0.5 * (1.0 - rng.random()) ** (1.0 / concentration)
    spread = [-math.log(1.0 - rng.random()) for _ in range(k - 1)]
    total = math.fsum(spread)
    rest = 1.0 - peak
    shares = [rest * e / total for e in spread] if total > 0 else [rest / (k - 1)] * (k - 1)
    vec = shares[:target] + [peak] + shares[target:]
    return tuple(vec)


def _draw_class(rng: random.Random, k: int, true_class: int | None, p_correct: float) -> int:
    if true_class is None:
        return min(int(rng.random() * k), k - 1)
    if rng.random() < p_correct:
        return true_class
    others = [c for c in range(k) if c != true_class]
    return others[min(int(rng.random() * len(others)), len(others) - 1)]


def _emit(rng: random.Random, stage: Stage, instances: Sequence[tuple[str, int | None]],
          models: Sequence[SyntheticModel]) -> list[PredictionRecord]:
    k = stage.class_count
    records = []
    for iid, true_class in instances:
        for m in models:
            p = m.correct_prob[true_class] if true_class is not None else 0.0
            for run in range(1, m.runs + 1):
                cls = _draw_class(rng, k, true_class, p)
                probs = _draw_vector(rng, k, cls, m.concentration) if k > 1 else (1.0,)
                records.append(PredictionRecord(iid, m.model_id, run, stage, probs))
    return records


def generate(spec: SyntheticSpec) -> tuple[PredictionTable, list[tuple[str, int]]]:
    """Draw a single-stage prediction table.

    Returns the table and the ground truth as ``(instance_id, class_index)``
    pairs. Instances are laid out class by class with ids
    ``<prefix>000001, <prefix>000002, ...``.
    """
    spec = validate_spec(spec)
    truth: list[tuple[str, int]] = []
    n = 0
    for cls, count in enumerate(spec.counts):
        for _ in range(count):
            n += 1
            truth.append((f"{spec.id_prefix}{n:06d}", cls))
    rng = random.Random(spec.seed)
    records = _emit(rng, spec.stage, truth, spec.models)
    return PredictionTable(spec.stage, records), truth


def generate_bifold(spec: BiFoldSyntheticSpec
                    ) -> tuple[PredictionTable, PredictionTable, list[GroundTruth]]:
    """Draw matching detection and classification tables from four-way truth.

    Detection rows are drawn first for every instance, then classification
    rows, from one generator stream. Classification rows are emitted for
    no-tumor instances too (with a uniformly random peak class) so that
    false-positive detections still have subtype predictions.
    """
    counts = _counts(spec.counts, FINAL_LABELS)
    det_models = tuple(_model(m, Stage.DETECTION.class_count) for m in spec.detection)
    cls_models = tuple(_model(m, Stage.CLASSIFICATION.class_count) for m in spec.classification)
    if not det_models or not cls_models:
        raise InvalidSpec("bi-fold spec needs models for both stages")
    seed = _seed(spec.seed)
    truth: list[GroundTruth] = []
    n = 0
    for label, count in zip(FINAL_LABELS, counts):
        for _ in range(count):
            n += 1
            truth.append(GroundTruth(f"{spec.id_prefix}{n:06d}", label))
    rng = random.Random(seed)
    det = _emit(rng, Stage.DETECTION,
                [(t.instance_id, 1 if t.label == NOTUMOR else 0) for t in truth], det_models)
    cls = _emit(rng, Stage.CLASSIFICATION,
                [(t.instance_id, None if t.label == NOTUMOR else CLASSIFICATION_CLASSES.index(t.label))
                 for t in truth], cls_models)
    return (PredictionTable(Stage.DETECTION, det), PredictionTable(Stage.CLASSIFICATION, cls), truth)


def perturb(table: PredictionTable, model_id: str, degradation: float, seed: int) -> PredictionTable:
    """Move each of ``model_id``'s argmaxes to a random wrong class with probability ``degradation``.

    The flip swaps the peak mass with the chosen class's mass, so the vector
    stays a distribution.
    """
    if not 0.0 <= degradation <= 1.0:
        raise InvalidSpec(f"degradation {degradation!r} outside [0, 1]")
    rng = random.Random(seed)
    k = table.stage.class_count
    out = []
    for r in table.records:
        if r.model_id != model_id or k < 2:
            out.append(r)
            continue
        if not rng.random() < degradation:
            out.append(r)
            continue
        top, _ = first_argmax(r.probs)
        others = [c for c in range(k) if c != top]
        target = others[min(int(rng.random() * len(others)), len(others) - 1)]
        probs = list(r.probs)
        probs[top], probs[target] = probs[target], probs[top]
        # A shared maximum would let the old class win the tie-break; move a
        # sliver of mass from each co-maximal class onto the target.
        for c in range(k):
            if c != target and probs[c] >= probs[target]:
                sliver = probs[c] * 1e-6
                probs[c] -= sliver
                probs[target] += sliver
        out.append(PredictionRecord(r.instance_id, r.model_id, r.run_id, r.stage, tuple(probs)))
    return PredictionTable(table.stage, out)


def parse_spec(data: object) -> SyntheticSpec | BiFoldSyntheticSpec:
    """Build a spec from its JSON form.

    A ``"stage"`` key selects the single-stage form
    (``{"stage", "counts", "models", "seed"}``); otherwise the bi-fold form
    ``{"counts", "detection", "classification", "seed"}`` is expected.
    """
    if not isinstance(data, dict):
        raise InvalidSpec("spec must be a JSON object")
    if "stage" in data:
        unknown = set(data) - {"stage", "counts", "models", "seed", "id_prefix"}
        if unknown:
            raise InvalidSpec(f"unknown spec keys {sorted(unknown)}")
        try:
            stage = Stage(data["stage"])
        except ValueError:
            raise InvalidSpec(f"unknown stage {data['stage']!r}") from None
        if "counts" not in data or "models" not in data:
            raise InvalidSpec("single-stage spec needs counts and models")
        models = data["models"]
        if not isinstance(models, list):
            raise InvalidSpec("models must be a list")
        return validate_spec(SyntheticSpec(
            stage,
            _counts(data["counts"], stage.class_names),
            tuple(_model(m, stage.class_count) for m in models),
            _seed(data.get("seed", 0)),
            str(data.get("id_prefix", "x")),
        ))
    unknown = set(data) - {"counts", "detection", "classification", "seed", "id_prefix"}
    if unknown:
        raise InvalidSpec(f"unknown spec keys {sorted(unknown)}")
    for key in ("counts", "detection", "classification"):
        if key not in data:
            raise InvalidSpec(f"bi-fold spec is missing {key!r}")
    for key in ("detection", "classification"):
        if not isinstance(data[key], list) or not data[key]:
            raise InvalidSpec(f"{key} must be a non-empty list of models")
    counts = data["counts"]
    if not isinstance(counts, Mapping):
        raise InvalidSpec("bi-fold counts must map labels to counts")
    _counts(counts, FINAL_LABELS)
    return BiFoldSyntheticSpec(
        dict(counts),
        tuple(_model(m, Stage.DETECTION.class_count) for m in data["detection"]),
        tuple(_model(m, Stage.CLASSIFICATION.class_count) for m in data["classification"]),
        _seed(data.get("seed", 0)),
        str(data.get("id_prefix", "b")),
    )


def load_spec(path: PathLike) -> SyntheticSpec | BiFoldSyntheticSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidSpec(f"{path}: invalid JSON: {exc}") from None
    return parse_spec(data)
