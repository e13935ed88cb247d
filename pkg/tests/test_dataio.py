import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bifold.dataio import (
    GroundTruth,
    Manifest,
    OutcomeRow,
    PredictionRecord,
    PredictionTable,
    load_manifest,
    load_outcomes,
    load_predictions,
    load_report,
    load_truth,
    manifest_to_dict,
    parse_manifest,
    write_manifest,
    write_outcomes,
    write_predictions,
    write_report,
    write_truth,
)
from bifold.errors import (
    DistributionViolation,
    DuplicateRecord,
    InvalidProfile,
    MalformedRow,
    ManifestConflict,
    ManifestIncomplete,
    ProbabilityOutOfRange,
    StageMismatch,
    UnknownLabel,
)
from bifold.labels import CLASSIFICATION_CLASSES, FINAL_LABELS, Stage
from bifold.metrics import ConfusionMatrix, evaluate
from tabledata import CASCADE_MATRICES

DET_HEADER = "instance_id,model_id,run_id,p_tumor,p_notumor\n"
CLS_HEADER = "instance_id,model_id,run_id,p_glioma,p_meningioma,p_pituitary\n"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestLoadPredictions:
    def test_direct_parse(self, tmp_path):
        t = load_predictions(write(tmp_path, "d.csv", DET_HEADER + "i1,cnn,1,0.8,0.2\n"), "detection")
        (r,) = t.records
        assert (r.instance_id, r.model_id, r.run_id, r.probs) == ("i1", "cnn", 1, (0.8, 0.2))

    def test_columns_bound_by_name(self, tmp_path):
        text = "p_notumor,instance_id,p_tumor,run_id,model_id\n0.2,i1,0.8,1,cnn\n"
        (r,) = load_predictions(write(tmp_path, "d.csv", text), Stage.DETECTION).records
        assert r.probs == (0.8, 0.2)

    def test_sum_too_far(self, tmp_path):
        with pytest.raises(DistributionViolation):
            load_predictions(write(tmp_path, "d.csv", DET_HEADER + "i1,cnn,1,0.7,0.2\n"), "detection")

    def test_small_deviation_renormalized(self, tmp_path):
        (r,) = load_predictions(
            write(tmp_path, "d.csv", DET_HEADER + "i1,cnn,1,0.8004,0.2\n"), "detection").records
        assert sum(r.probs) == pytest.approx(1.0, abs=1e-12)
        assert r.probs[0] == pytest.approx(0.8004 / 1.0004)

    def test_out_of_range(self, tmp_path):
        with pytest.raises(ProbabilityOutOfRange):
            load_predictions(write(tmp_path, "d.csv", DET_HEADER + "i1,cnn,1,1.2,-0.2\n"), "detection")

    def test_duplicate(self, tmp_path):
        text = DET_HEADER + "i1,cnn,1,0.8,0.2\ni1,cnn,1,0.7,0.3\n"
        with pytest.raises(DuplicateRecord, match="line 3"):
            load_predictions(write(tmp_path, "d.csv", text), "detection")

    def test_malformed_reports_every_line(self, tmp_path):
        text = DET_HEADER + "i1,cnn,1,0.8,0.2\ni2,cnn,x,0.8,0.2\ni3,cnn,1,0.8\n"
        with pytest.raises(MalformedRow) as exc:
            load_predictions(write(tmp_path, "d.csv", text), "detection")
        assert "line 3" in str(exc.value) and "line 4" in str(exc.value)
        assert len(exc.value.rejected) == 2

    def test_wrong_header(self, tmp_path):
        with pytest.raises(MalformedRow):
            load_predictions(write(tmp_path, "d.csv", CLS_HEADER), "detection")

    def test_run_averaging(self, tmp_path):
        text = DET_HEADER + "i1,cnn,2,0.6,0.4\ni1,cnn,1,1.0,0.0\ni1,vgg,1,0.3,0.7\n"
        avg = load_predictions(write(tmp_path, "d.csv", text), "detection").averaged()
        assert avg["i1"]["cnn"] == pytest.approx((0.8, 0.2))
        assert avg["i1"]["vgg"] == (0.3, 0.7)


def test_table_rejects_wrong_stage():
    rec = PredictionRecord("i", "m", 1, Stage.DETECTION, (0.5, 0.5))
    with pytest.raises(StageMismatch):
        PredictionTable(Stage.CLASSIFICATION, [rec])


MANIFEST = {
    "detection": [{"model_id": "cnn", "per_class_f1": [0.99, 0.98]},
                  {"model_id": "irv2", "f1_average": 0.97}],
    "classification": [{"model_id": "cnn", "per_class_f1": [0.98, 0.96, 0.94], "f1_average": 0.96}],
}


class TestManifest:
    def test_valid(self, tmp_path):
        p = write(tmp_path, "m.json", json.dumps(MANIFEST))
        m = load_manifest(p)
        assert [x.model_id for x in m.detection] == ["cnn", "irv2"]
        assert m.detection[0].f1_average == pytest.approx(0.985)
        assert m.classification[0].f1_average == pytest.approx(0.96)

    def test_conflict(self):
        bad = json.loads(json.dumps(MANIFEST))
        bad["classification"][0]["f1_average"] = 0.9
        with pytest.raises(ManifestConflict):
            parse_manifest(bad)

    def test_missing_stage(self):
        with pytest.raises(ManifestIncomplete):
            parse_manifest({"detection": MANIFEST["detection"]})

    def test_unknown_keys(self):
        with pytest.raises(InvalidProfile):
            parse_manifest({**MANIFEST, "extra": []})
        bad = json.loads(json.dumps(MANIFEST))
        bad["detection"][0]["weight"] = 1
        with pytest.raises(InvalidProfile):
            parse_manifest(bad)

    def test_round_trip(self, tmp_path):
        m = parse_manifest(MANIFEST)
        write_manifest(m, tmp_path / "m.json")
        assert load_manifest(tmp_path / "m.json") == m


class TestTruth:
    def test_four_rows(self, tmp_path):
        text = "instance_id,label\n" + "".join(f"i{i},{lab}\n" for i, lab in enumerate(FINAL_LABELS))
        truth = load_truth(write(tmp_path, "t.csv", text))
        assert [t.label for t in truth] == list(FINAL_LABELS)

    def test_duplicate(self, tmp_path):
        with pytest.raises(DuplicateRecord):
            load_truth(write(tmp_path, "t.csv", "instance_id,label\na,glioma\na,notumor\n"))

    def test_unknown_label(self, tmp_path):
        with pytest.raises(UnknownLabel):
            load_truth(write(tmp_path, "t.csv", "instance_id,label\na,tumour\n"))

    def test_empty_file(self, tmp_path):
        assert load_truth(write(tmp_path, "t.csv", "")) == []

    def test_round_trip(self, tmp_path):
        truth = [GroundTruth("a", "glioma"), GroundTruth("b", "notumor")]
        write_truth(truth, tmp_path / "t.csv")
        assert load_truth(tmp_path / "t.csv") == truth


class TestOutcomes:
    def test_empty_is_header_only(self, tmp_path):
        write_outcomes([], tmp_path / "o.csv")
        assert (tmp_path / "o.csv").read_bytes() == b"instance_id,final_label,detection_class,tie_broken\n"

    def test_round_trip_and_determinism(self, tmp_path):
        rows = [OutcomeRow("a", "glioma", 0, False), OutcomeRow("b", "notumor", 1, True)]
        write_outcomes(rows, tmp_path / "o1.csv")
        write_outcomes(rows, tmp_path / "o2.csv")
        assert (tmp_path / "o1.csv").read_bytes() == (tmp_path / "o2.csv").read_bytes()
        assert load_outcomes(tmp_path / "o1.csv") == rows


def test_report_round_trip(tmp_path):
    report = evaluate(ConfusionMatrix(CLASSIFICATION_CLASSES, FINAL_LABELS, CASCADE_MATRICES["nwm"]), 3)
    write_report(report, tmp_path / "r.json")
    first = (tmp_path / "r.json").read_bytes()
    assert load_report(tmp_path / "r.json") == report
    write_report(report, tmp_path / "r.json")
    assert (tmp_path / "r.json").read_bytes() == first
    assert b"\r\n" not in first


prob_vectors = st.lists(st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
                        min_size=3, max_size=3).filter(lambda v: sum(v) > 0.1).map(
    lambda v: tuple(x / sum(v) for x in v))


@settings(max_examples=100)
@given(st.lists(st.tuples(st.sampled_from(["a", "b", "c 1", "d,e"]), st.sampled_from(["m1", "m2"]),
                          st.integers(1, 3), prob_vectors),
                max_size=20, unique_by=lambda r: r[:3]))
def test_prediction_round_trip(tmp_path_factory, rows):
    table = PredictionTable(Stage.CLASSIFICATION,
                            [PredictionRecord(i, m, r, Stage.CLASSIFICATION, p) for i, m, r, p in rows])
    path = tmp_path_factory.mktemp("rt") / "p.csv"
    write_predictions(table, path)
    assert load_predictions(path, Stage.CLASSIFICATION) == table
