"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error. Every failure prints one
line to stderr of the form ``error[<Code>]: <detail>``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .dataio import (
    GroundTruth,
    Manifest,
    fusion_results_text,
    load_manifest,
    load_outcomes,
    load_predictions,
    load_truth,
    outcomes_text,
    write_manifest,
    write_predictions,
    write_report,
    write_truth,
)
from .errors import BiFoldError, InvalidSpec, MissingPredictions, ShapeMismatch
from .evaluation import evaluate_outcomes
from .fusion import first_argmax, fuse
from .labels import Method, Stage
from .metrics import format_report, profiles_from_validation
from .pipeline import BiFoldConfig, run_batch
from .profiles import WeightVector, uwcs_weights, validate_user_weights
from .simulator import BiFoldSyntheticSpec, SyntheticSpec, generate, generate_bifold, load_spec

log = logging.getLogger("bifold")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit 2; usage errors are 1 here
        raise UsageError(f"{self.prog}: {message}")


def _parse_weights(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--weights expects comma-separated numbers, got {text!r}") from None


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _weights_flag(args, method: Method, stage: Stage | None,
                  model_ids: Sequence[str] | None) -> WeightVector | None:
    if args.weights is not None and method is not Method.UWM:
        raise UsageError("--weights is only accepted with --method uwm")
    if method is Method.UWM:
        if args.weights is None:
            raise UsageError("--method uwm needs --weights")
        return validate_user_weights(_parse_weights(args.weights), stage, model_ids)
    return None


def _require_manifest(args, method: Method) -> Manifest | None:
    if method in (Method.ESVT, Method.NWM) and not args.manifest:
        raise UsageError(f"--method {method.value} needs --manifest")
    return load_manifest(args.manifest) if args.manifest else None


def cmd_weights(args) -> int:
    stage = Stage(args.stage)
    manifest = load_manifest(args.manifest)
    weights = uwcs_weights(manifest.for_stage(stage))
    lines = [f"{mid}\t{w:.5f}" for mid, w in zip(weights.model_ids or (), weights)]
    sys.stdout.write("\n".join(lines) + "\n")
    if args.out:
        data = {"stage": stage.value, "model_ids": list(weights.model_ids or ()),
                "weights": list(weights.weights)}
        _emit(json.dumps(data, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_fuse(args) -> int:
    stage = Stage(args.stage)
    method = Method(args.method)
    manifest = _require_manifest(args, method)
    table = load_predictions(args.predictions, stage)
    if manifest is not None:
        profiles = manifest.for_stage(stage)
        order = tuple(p.model_id for p in profiles)
        unknown = set(table.model_ids()) - set(order)
        if unknown:
            raise ShapeMismatch(f"predictions name models {sorted(unknown)} absent from the manifest")
    else:
        profiles = None
        order = table.model_ids()
    weights = _weights_flag(args, method, stage, order)
    if method in (Method.ESVT, Method.NWM):
        weights = uwcs_weights(profiles)
    if weights is not None and len(weights) != len(order):
        raise ShapeMismatch(f"{len(weights)} weights for {len(order)} models {list(order)}")
    results = {}
    for iid, per_model in table.averaged().items():
        missing = [m for m in order if m not in per_model]
        if missing:
            raise MissingPredictions(iid, f"{stage.value} rows missing for models {missing}")
        results[iid] = fuse(method, [per_model[m] for m in order], weights)
    _emit(fusion_results_text(results, stage), args.out)
    log.info("fused %d instances with %s", len(results), method.value)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    method = Method(args.method)
    manifest = _require_manifest(args, method)
    det = load_predictions(args.det, Stage.DETECTION)
    cls = load_predictions(args.cls, Stage.CLASSIFICATION) if args.cls else None
    user = _weights_flag(args, method, None, None)
    if user is not None and manifest is not None:
        det_w = WeightVector(user.weights, Stage.DETECTION,
                             [p.model_id for p in manifest.detection])
        cls_w = WeightVector(user.weights, Stage.CLASSIFICATION,
                             [p.model_id for p in manifest.classification])
    else:
        det_w = cls_w = user
    config = BiFoldConfig(method, det_w, cls_w)
    outcomes = run_batch(det, cls, config, manifest)
    _emit(outcomes_text(outcomes), args.out)
    log.info("pipeline produced %d outcomes", len(outcomes))
    return EXIT_OK


def cmd_eval(args) -> int:
    outcomes = load_outcomes(args.outcomes)
    truth = load_truth(args.truth)
    report = evaluate_outcomes(outcomes, truth, args.stage or "bifold")
    sys.stdout.write(format_report(report))
    if args.out:
        write_report(report, args.out)
    return EXIT_OK


def _validation_manifest(spec: BiFoldSyntheticSpec) -> Manifest:
    """Profiles measured on an independent draw (seed + 1) of the same spec."""
    val = BiFoldSyntheticSpec(spec.counts, spec.detection, spec.classification,
                              spec.seed + 1, spec.id_prefix)
    det, cls, truth = generate_bifold(val)
    labels = {t.instance_id: t.label for t in truth}
    stages = {}
    for stage, table in ((Stage.DETECTION, det), (Stage.CLASSIFICATION, cls)):
        pairs: dict[str, list[tuple[int, int]]] = {m: [] for m in table.model_ids()}
        for iid, per_model in sorted(table.averaged().items()):
            label = labels[iid]
            if stage is Stage.DETECTION:
                true = 1 if label == "notumor" else 0
            elif label == "notumor":
                continue
            else:
                true = stage.class_names.index(label)
            for mid, probs in per_model.items():
                pairs[mid].append((true, first_argmax(probs)[0]))
        stages[stage] = profiles_from_validation(pairs, stage)
    return Manifest(stages[Stage.DETECTION], stages[Stage.CLASSIFICATION])


def cmd_simulate(args) -> int:
    try:
        spec = load_spec(args.spec)
    except InvalidSpec as exc:
        raise UsageError(f"invalid spec: {exc}") from None
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(spec, SyntheticSpec):
        table, truth = generate(spec)
        write_predictions(table, out / f"{spec.stage.value}.csv")
        names = spec.stage.class_names
        write_truth([GroundTruth(i, names[c]) for i, c in truth], out / "truth.csv")
        written = [f"{spec.stage.value}.csv", "truth.csv"]
    else:
        det, cls, truth = generate_bifold(spec)
        write_predictions(det, out / "detection.csv")
        write_predictions(cls, out / "classification.csv")
        write_truth(truth, out / "truth.csv")
        write_manifest(_validation_manifest(spec), out / "manifest.json")
        written = ["detection.csv", "classification.csv", "truth.csv", "manifest.json"]
    for name in written:
        sys.stdout.write(f"{out / name}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bifold", description="Weighted decision fusion for two-stage classifiers.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    methods = [m.value for m in Method]
    stages = [s.value for s in Stage]

    p = sub.add_parser("weights", help="compute UWCS weights from a manifest")
    p.add_argument("--manifest", required=True, help="manifest JSON with per-model F1 scores")
    p.add_argument("--stage", required=True, choices=stages)
    p.add_argument("--out", help="also write the weights as JSON to this path")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("fuse", help="fuse one stage's predictions per instance")
    p.add_argument("predictions", help="prediction CSV for --stage")
    p.add_argument("--stage", required=True, choices=stages)
    p.add_argument("--method", required=True, choices=methods)
    p.add_argument("--manifest", help="manifest JSON; required for esvt and nwm, fixes model order")
    p.add_argument("--weights", help="comma-separated user weights, uwm only; in manifest order, "
                                     "else in order of first appearance in the file")
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("pipeline", help="run the detection -> classification cascade")
    p.add_argument("--det", required=True, help="detection prediction CSV")
    p.add_argument("--cls", help="classification prediction CSV")
    p.add_argument("--manifest", help="manifest JSON; required for esvt and nwm")
    p.add_argument("--method", required=True, choices=methods)
    p.add_argument("--weights", help="comma-separated user weights for both stages, uwm only")
    p.add_argument("--out", help="outcomes CSV (default: stdout)")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("eval", help="score an outcomes file against ground truth")
    p.add_argument("outcomes", help="outcomes CSV from 'pipeline'")
    p.add_argument("--truth", required=True, help="ground truth CSV (instance_id,label)")
    p.add_argument("--stage", choices=stages,
                   help="detection: tumor/notumor matrix; classification: subtype rows only; "
                        "default: full four-way matrix")
    p.add_argument("--out", help="write the report as JSON to this path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", help="generate synthetic prediction tables")
    p.add_argument("--spec", required=True, help="synthetic spec JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the spec's seed")
    p.set_defaults(func=cmd_simulate)
    return parser


def _configure_logging() -> None:
    level = os.environ.get("BIFOLD_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    _configure_logging()
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error[usage]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BiFoldError as exc:
        print(f"error[{exc.code}]: {exc}".replace("\n", " "), file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error[IOError]: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
