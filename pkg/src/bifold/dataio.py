"""Reading and writing prediction tables, manifests, ground truth and outcomes.

File formats (UTF-8, LF line endings, header row required for CSV):

* detection predictions: ``instance_id,model_id,run_id,p_tumor,p_notumor``
* classification predictions:
  ``instance_id,model_id,run_id,p_glioma,p_meningioma,p_pituitary``
* ground truth: ``instance_id,label`` with label in glioma/meningioma/pituitary/notumor
* outcomes: ``instance_id,final_label,detection_class,tie_broken``
* manifest: JSON ``{"detection": [...], "classification": [...]}`` where each
  entry is ``{"model_id": ..., "per_class_f1": [...]}`` and/or ``"f1_average"``

Probability columns are bound by name, not position. Rows whose probabilities
sum to within 1e-3 of one are rescaled; larger deviations are rejected.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    BiFoldError,
    DistributionViolation,
    DuplicateRecord,
    InvalidProfile,
    MalformedRow,
    ManifestConflict,
    ManifestIncomplete,
    ProbabilityOutOfRange,
    ShapeMismatch,
    StageMismatch,
    UnknownLabel,
)
from .fusion import average_runs
from .labels import FINAL_LABELS, Stage, as_stage
from .profiles import ModelProfile

RENORMALIZE_TOLERANCE = 1e-3
# Below this deviation a row is treated as already normalized and left untouched,
# which keeps write/read round trips bit-exact.
EXACT_SUM_TOLERANCE = 1e-9
MANIFEST_CONFLICT_TOLERANCE = 1e-6

PathLike = str | os.PathLike


@dataclass(frozen=True)
class PredictionRecord:
    instance_id: str
    model_id: str
    run_id: int
    stage: Stage
    probs: tuple[float, ...]


class PredictionTable:
    """Immutable set of prediction records for a single stage."""

    def __init__(self, stage: Stage | str, records: Iterable[PredictionRecord] = ()) -> None:
        self.stage = as_stage(stage)
        recs = tuple(records)
        seen: set[tuple[str, str, int]] = set()
        k = self.stage.class_count
        for r in recs:
            if r.stage is not self.stage:
                raise StageMismatch(f"{r.stage.value} record in a {self.stage.value} table")
            if len(r.probs) != k:
                raise ShapeMismatch(
                    f"{r.instance_id}/{r.model_id}: {len(r.probs)} probabilities, expected {k}"
                )
            key = (r.instance_id, r.model_id, r.run_id)
            if key in seen:
                raise DuplicateRecord(
                    f"duplicate record instance={r.instance_id} model={r.model_id} run={r.run_id}"
                )
            seen.add(key)
        self.records = recs

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PredictionTable):
            return NotImplemented
        return self.stage is other.stage and self.records == other.records

    def __repr__(self) -> str:
        return f"PredictionTable({self.stage.value!r}, {len(self.records)} records)"

    def model_ids(self) -> tuple[str, ...]:
        """Model ids in order of first appearance."""
        return tuple(dict.fromkeys(r.model_id for r in self.records))

    def instance_ids(self) -> tuple[str, ...]:
        return tuple(sorted({r.instance_id for r in self.records}))

    def averaged(self) -> dict[str, dict[str, tuple[float, ...]]]:
        """``{instance_id: {model_id: probs}}`` with repeated runs averaged."""
        grouped: dict[str, dict[str, list[tuple[int, tuple[float, ...]]]]] = {}
        for r in self.records:
            grouped.setdefault(r.instance_id, {}).setdefault(r.model_id, []).append(
                (r.run_id, r.probs)
            )
        out: dict[str, dict[str, tuple[float, ...]]] = {}
        for iid, models in grouped.items():
            out[iid] = {}
            for mid, runs in models.items():
                runs.sort(key=lambda t: t[0])
                out[iid][mid] = runs[0][1] if len(runs) == 1 else average_runs([p for _, p in runs])
        return out


@dataclass(frozen=True)
class GroundTruth:
    instance_id: str
    label: str


@dataclass(frozen=True)
class Manifest:
    detection: tuple[ModelProfile, ...]
    classification: tuple[ModelProfile, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "detection", tuple(self.detection))
        object.__setattr__(self, "classification", tuple(self.classification))

    def for_stage(self, stage: Stage | str) -> tuple[ModelProfile, ...]:
        return self.detection if as_stage(stage) is Stage.DETECTION else self.classification


@dataclass(frozen=True)
class OutcomeRow:
    """One line of an outcomes file."""

    instance_id: str
    final_label: str
    detection_class: int
    tie_broken: bool


def _raise_collected(errors: list[BiFoldError]) -> None:
    if not errors:
        return
    first = errors[0]
    if len(errors) > 1:
        rest = "; ".join(str(e) for e in errors[1:])
        first.args = (f"{first.args[0]} (and {len(errors) - 1} more: {rest})",)
    first.rejected = errors  # type: ignore[attr-defined]
    raise first


def _open_text(path: PathLike, mode: str):
    return open(path, mode, encoding="utf-8", newline="")


def _check_header(header: list[str] | None, expected: Sequence[str], path: PathLike) -> None:
    if header is None:
        raise MalformedRow(1, f"{path}: missing header, expected {','.join(expected)}")
    if sorted(header) != sorted(expected) or len(header) != len(expected):
        raise MalformedRow(1, f"header {','.join(header)} does not match {','.join(expected)}")


def _parse_probs(raw: Sequence[str], line: int) -> tuple[float, ...]:
    try:
        probs = [float(v) for v in raw]
    except ValueError:
        raise MalformedRow(line, f"non-numeric probability in {list(raw)}") from None
    for p in probs:
        if math.isnan(p) or not 0.0 <= p <= 1.0:
            raise ProbabilityOutOfRange(f"line {line}: probability {p!r} outside [0, 1]")
    total = math.fsum(probs)
    dev = abs(total - 1.0)
    if dev > RENORMALIZE_TOLERANCE:
        raise DistributionViolation(f"line {line}: probabilities sum to {total!r}")
    if dev > EXACT_SUM_TOLERANCE:
        probs = [p / total for p in probs]
    return tuple(probs)


def load_predictions(path: PathLike, stage: Stage | str) -> PredictionTable:
    """Parse a prediction CSV for ``stage``.

    All rows are checked before raising, so the error message lists every
    rejected line, not only the first.
    """
    stage = as_stage(stage)
    columns = ("instance_id", "model_id", "run_id", *stage.prob_columns)
    records: list[PredictionRecord] = []
    errors: list[BiFoldError] = []
    seen: dict[tuple[str, str, int], int] = {}
    with _open_text(path, "r") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        _check_header(header, columns, path)
        assert header is not None
        index = {name: header.index(name) for name in columns}
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                if len(row) != len(columns):
                    raise MalformedRow(line, f"expected {len(columns)} fields, got {len(row)}")
                iid = row[index["instance_id"]].strip()
                mid = row[index["model_id"]].strip()
                if not iid or not mid:
                    raise MalformedRow(line, "empty instance_id or model_id")
                try:
                    run = int(row[index["run_id"]])
                except ValueError:
                    raise MalformedRow(line, f"run_id {row[index['run_id']]!r} is not an integer") from None
                if run < 1:
                    raise MalformedRow(line, f"run_id {run} must be >= 1")
                probs = _parse_probs([row[index[c]] for c in stage.prob_columns], line)
                key = (iid, mid, run)
                if key in seen:
                    raise DuplicateRecord(
                        f"line {line}: duplicate of line {seen[key]} "
                        f"(instance={iid} model={mid} run={run})"
                    )
                seen[key] = line
                records.append(PredictionRecord(iid, mid, run, stage, probs))
            except BiFoldError as exc:
                errors.append(exc)
    _raise_collected(errors)
    return PredictionTable(stage, records)


def write_predictions(table: PredictionTable, path: PathLike) -> None:
    stage = table.stage
    with _open_text(path, "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["instance_id", "model_id", "run_id", *stage.prob_columns])
        for r in table.records:
            writer.writerow([r.instance_id, r.model_id, r.run_id, *(repr(p) for p in r.probs)])


_ENTRY_KEYS = {"model_id", "per_class_f1", "f1_average"}


def _parse_profile(entry: object, stage: Stage, where: str) -> ModelProfile:
    if not isinstance(entry, dict):
        raise InvalidProfile(f"{where}: expected an object, got {type(entry).__name__}")
    unknown = set(entry) - _ENTRY_KEYS
    if unknown:
        raise InvalidProfile(f"{where}: unknown keys {sorted(unknown)}")
    mid = entry.get("model_id")
    if not isinstance(mid, str) or not mid:
        raise InvalidProfile(f"{where}: model_id must be a non-empty string")
    per_class = entry.get("per_class_f1")
    avg = entry.get("f1_average")
    if per_class is None and avg is None:
        raise ManifestIncomplete(f"{where} ({mid}): needs per_class_f1 or f1_average")
    if per_class is not None:
        if not isinstance(per_class, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in per_class
        ):
            raise InvalidProfile(f"{where} ({mid}): per_class_f1 must be a list of numbers")
        profile = ModelProfile(mid, stage, tuple(per_class))
        if avg is not None and abs(float(avg) - profile.f1_average) > MANIFEST_CONFLICT_TOLERANCE:
            raise ManifestConflict(
                f"{where} ({mid}): f1_average {avg} disagrees with per_class_f1 "
                f"mean {profile.f1_average:.6f}"
            )
        return profile
    if not isinstance(avg, (int, float)) or isinstance(avg, bool):
        raise InvalidProfile(f"{where} ({mid}): f1_average must be a number")
    return ModelProfile(mid, stage, f1_average=float(avg))


def parse_manifest(data: object) -> Manifest:
    if not isinstance(data, dict):
        raise InvalidProfile("manifest must be a JSON object")
    unknown = set(data) - {s.value for s in Stage}
    if unknown:
        raise InvalidProfile(f"manifest has unknown keys {sorted(unknown)}")
    sections: dict[Stage, tuple[ModelProfile, ...]] = {}
    for stage in Stage:
        entries = data.get(stage.value)
        if entries is None:
            raise ManifestIncomplete(f"manifest has no {stage.value!r} section")
        if not isinstance(entries, list) or not entries:
            raise ManifestIncomplete(f"manifest {stage.value!r} section must be a non-empty list")
        profiles = tuple(
            _parse_profile(e, stage, f"{stage.value}[{i}]") for i, e in enumerate(entries)
        )
        ids = [p.model_id for p in profiles]
        if len(set(ids)) != len(ids):
            raise DuplicateRecord(f"manifest {stage.value!r} repeats a model_id: {ids}")
        sections[stage] = profiles
    return Manifest(sections[Stage.DETECTION], sections[Stage.CLASSIFICATION])


def load_manifest(path: PathLike) -> Manifest:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidProfile(f"{path}: invalid JSON: {exc}") from None
    return parse_manifest(data)


def manifest_to_dict(manifest: Manifest) -> dict:
    out: dict[str, list[dict]] = {}
    for stage in Stage:
        entries = []
        for p in manifest.for_stage(stage):
            entry: dict[str, object] = {"model_id": p.model_id}
            if p.per_class_f1 is not None:
                entry["per_class_f1"] = list(p.per_class_f1)
            entry["f1_average"] = p.f1_average
            entries.append(entry)
        out[stage.value] = entries
    return out


def _write_json(data: object, path: PathLike) -> None:
    with _open_text(path, "w") as fh:
        fh.write(json.dumps(data, indent=2, sort_keys=False))
        fh.write("\n")


def write_manifest(manifest: Manifest, path: PathLike) -> None:
    _write_json(manifest_to_dict(manifest), path)


def load_truth(path: PathLike, labels: Sequence[str] = FINAL_LABELS) -> list[GroundTruth]:
    """Read an ``instance_id,label`` CSV; an empty file yields an empty list."""
    rows: list[GroundTruth] = []
    errors: list[BiFoldError] = []
    seen: dict[str, int] = {}
    allowed = set(labels)
    with _open_text(path, "r") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return rows
        _check_header(header, ("instance_id", "label"), path)
        i_id, i_label = header.index("instance_id"), header.index("label")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            try:
                if len(row) != 2:
                    raise MalformedRow(line, f"expected 2 fields, got {len(row)}")
                iid, label = row[i_id].strip(), row[i_label].strip()
                if not iid:
                    raise MalformedRow(line, "empty instance_id")
                if label not in allowed:
                    raise UnknownLabel(f"line {line}: unknown label {label!r}")
                if iid in seen:
                    raise DuplicateRecord(f"line {line}: instance {iid!r} already on line {seen[iid]}")
                seen[iid] = line
                rows.append(GroundTruth(iid, label))
            except BiFoldError as exc:
                errors.append(exc)
    _raise_collected(errors)
    return rows


def write_truth(truth: Iterable[GroundTruth], path: PathLike) -> None:
    with _open_text(path, "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["instance_id", "label"])
        for t in truth:
            writer.writerow([t.instance_id, t.label])


OUTCOME_COLUMNS = ("instance_id", "final_label", "detection_class", "tie_broken")


def outcomes_text(outcomes: Iterable) -> str:
    """Render bi-fold outcomes (anything with the :class:`OutcomeRow` fields) as CSV."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(OUTCOME_COLUMNS)
    for o in outcomes:
        writer.writerow([o.instance_id, o.final_label, int(o.detection_class),
                         "true" if o.tie_broken else "false"])
    return buf.getvalue()


def write_outcomes(outcomes: Iterable, path: PathLike) -> None:
    with _open_text(path, "w") as fh:
        fh.write(outcomes_text(outcomes))


def load_outcomes(path: PathLike) -> list[OutcomeRow]:
    rows: list[OutcomeRow] = []
    errors: list[BiFoldError] = []
    seen: set[str] = set()
    with _open_text(path, "r") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        _check_header(header, OUTCOME_COLUMNS, path)
        assert header is not None
        idx = {c: header.index(c) for c in OUTCOME_COLUMNS}
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            try:
                if len(row) != len(OUTCOME_COLUMNS):
                    raise MalformedRow(line, f"expected {len(OUTCOME_COLUMNS)} fields, got {len(row)}")
                iid = row[idx["instance_id"]].strip()
                label = row[idx["final_label"]].strip()
                if label not in FINAL_LABELS:
                    raise UnknownLabel(f"line {line}: unknown label {label!r}")
                det = row[idx["detection_class"]].strip()
                if det not in ("0", "1"):
                    raise MalformedRow(line, f"detection_class {det!r} must be 0 or 1")
                tie = row[idx["tie_broken"]].strip().lower()
                if tie not in ("true", "false"):
                    raise MalformedRow(line, f"tie_broken {tie!r} must be true or false")
                if iid in seen:
                    raise DuplicateRecord(f"line {line}: instance {iid!r} repeated")
                seen.add(iid)
                rows.append(OutcomeRow(iid, label, int(det), tie == "true"))
            except BiFoldError as exc:
                errors.append(exc)
    _raise_collected(errors)
    return rows


def write_report(report, path: PathLike) -> None:
    """Write an evaluation report as JSON."""
    from .metrics import report_to_dict

    _write_json(report_to_dict(report), path)


def load_report(path: PathLike):
    from .metrics import report_from_dict

    with open(path, encoding="utf-8") as fh:
        return report_from_dict(json.load(fh))


FUSION_BASE_COLUMNS = ("instance_id", "method", "predicted_class", "predicted_label",
                       "winning_model", "tie_broken")


def fusion_results_text(results: Mapping[str, object], stage: Stage | str) -> str:
    """Render single-stage fusion results keyed by instance id, in id order.

    Score columns are named ``score_<class>`` and printed with 10 decimals.
    """
    stage = as_stage(stage)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([*FUSION_BASE_COLUMNS, *(f"score_{c}" for c in stage.class_names)])
    for iid in sorted(results):
        r = results[iid]
        writer.writerow([
            iid,
            r.method.value,
            r.predicted_class,
            stage.class_names[r.predicted_class],
            "" if r.winning_model is None else r.winning_model,
            "true" if r.tie_broken else "false",
            *(f"{s:.10f}" for s in r.fused_scores),
        ])
    return buf.getvalue()


def write_fusion_results(results: Mapping[str, object], stage: Stage | str, path: PathLike) -> None:
    with _open_text(path, "w") as fh:
        fh.write(fusion_results_text(results, stage))


def ensure_dir(path: PathLike) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
