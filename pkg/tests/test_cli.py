import csv
import json

import pytest

from bifold.cli import build_parser, main
from tabledata import DETECTION_MATRICES

DET_HEADER = "instance_id,model_id,run_id,p_tumor,p_notumor\n"
CLS_HEADER = "instance_id,model_id,run_id,p_glioma,p_meningioma,p_pituitary\n"
EXAMPLE_ROWS = "i1,cnn,1,0.8,0.2\ni1,irv2,1,0.7,0.3\ni1,vgg,1,0.1,0.9\n"


def manifest(det=(0.9, 0.8, 0.7), cls=(0.9, 0.9, 0.9)):
    return {
        "detection": [{"model_id": m, "f1_average": a} for m, a in zip(("cnn", "irv2", "vgg"), det)],
        "classification": [{"model_id": m, "f1_average": a} for m, a in zip(("cnn", "irv2", "vgg"), cls)],
    }


@pytest.fixture
def files(tmp_path):
    def make(name, content):
        p = tmp_path / name
        p.write_text(content if isinstance(content, str) else json.dumps(content), encoding="utf-8")
        return str(p)
    make.dir = tmp_path
    return make


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def fused_rows(text):
    return list(csv.DictReader(text.splitlines()))


class TestWeights:
    def test_hand_values(self, files, capsys):
        code, out, _ = run(capsys, "weights", "--manifest", files("m.json", manifest()),
                           "--stage", "detection")
        assert code == 0
        values = [float(line.split("\t")[1]) for line in out.splitlines()]
        assert values == pytest.approx([0.375, 0.33333, 0.29167], abs=1e-5)

    def test_all_zero(self, files, capsys):
        code, _, err = run(capsys, "weights", "--manifest", files("m.json", manifest(det=(0, 0, 0))),
                           "--stage", "detection")
        assert code == 2
        assert err.startswith("error[DegenerateWeights]:")
        assert err.count("\n") == 1

    def test_uniform(self, files, capsys):
        code, out, _ = run(capsys, "weights", "--manifest", files("m.json", manifest()),
                           "--stage", "classification", "--out", str(files.dir / "w.json"))
        assert code == 0
        assert [line.split("\t")[1] for line in out.splitlines()] == ["0.33333"] * 3
        assert json.loads((files.dir / "w.json").read_text())["model_ids"] == ["cnn", "irv2", "vgg"]


class TestFuse:
    def test_uwm(self, files, capsys):
        code, out, _ = run(capsys, "fuse", files("d.csv", DET_HEADER + EXAMPLE_ROWS), "--stage",
                           "detection", "--method", "uwm", "--weights", "0.2,0.2,0.6")
        assert code == 0
        (row,) = fused_rows(out)
        assert row["predicted_class"] == "1"
        assert float(row["score_notumor"]) == pytest.approx(0.64)

    def test_soft(self, files, capsys):
        _, out, _ = run(capsys, "fuse", files("d.csv", DET_HEADER + EXAMPLE_ROWS), "--stage",
                        "detection", "--method", "soft")
        assert fused_rows(out)[0]["predicted_class"] == "0"

    def test_nwm_flat_index(self, files, capsys):
        # UWCS weights from averages 0.3/0.3/0.9 are the 0.2/0.2/0.6 user weights
        m = files("m.json", manifest(det=(0.3, 0.3, 0.9)))
        code, out, _ = run(capsys, "fuse", files("d.csv", DET_HEADER + EXAMPLE_ROWS), "--stage",
                           "detection", "--method", "nwm", "--manifest", m)
        assert code == 0
        row = fused_rows(out)[0]
        assert (row["predicted_class"], row["winning_model"]) == ("1", "2")

    def test_weights_rejected_for_esvt(self, files, capsys):
        code, _, err = run(capsys, "fuse", files("d.csv", DET_HEADER + EXAMPLE_ROWS), "--stage",
                           "detection", "--method", "esvt", "--manifest", files("m.json", manifest()),
                           "--weights", "0.2,0.2,0.6")
        assert code == 1 and err.startswith("error[usage]")

    def test_weight_count_mismatch(self, files, capsys):
        code, _, err = run(capsys, "fuse", files("d.csv", DET_HEADER + EXAMPLE_ROWS), "--stage",
                           "detection", "--method", "uwm", "--weights", "0.5,0.5")
        assert code == 2 and err.startswith("error[ShapeMismatch]")


class TestPipeline:
    def test_gated_out_needs_no_rows(self, files, capsys):
        det = files("d.csv", DET_HEADER + "a,cnn,1,0.8,0.2\na,vgg,1,0.7,0.3\n"
                                          "b,cnn,1,0.1,0.9\nb,vgg,1,0.2,0.8\n")
        cls = files("c.csv", CLS_HEADER + "a,cnn,1,0.1,0.2,0.7\na,vgg,1,0.2,0.2,0.6\n")
        out = str(files.dir / "o.csv")
        code, _, _ = run(capsys, "pipeline", "--det", det, "--cls", cls, "--method", "soft", "--out", out)
        assert code == 0
        rows = list(csv.DictReader(open(out)))
        assert [(r["instance_id"], r["final_label"]) for r in rows] == [("a", "pituitary"), ("b", "notumor")]

    def test_missing_rows(self, files, capsys):
        det = files("d.csv", DET_HEADER + "a,cnn,1,0.8,0.2\nb,cnn,1,0.9,0.1\n")
        cls = files("c.csv", CLS_HEADER + "a,cnn,1,0.1,0.2,0.7\n")
        code, _, err = run(capsys, "pipeline", "--det", det, "--cls", cls, "--method", "soft")
        assert code == 2 and err.startswith("error[MissingPredictions]")

    def test_empty_detection(self, files, capsys):
        code, out, _ = run(capsys, "pipeline", "--det", files("d.csv", DET_HEADER), "--method", "nwm",
                           "--manifest", files("m.json", manifest()))
        assert code == 0
        assert out == "instance_id,final_label,detection_class,tie_broken\n"

    def test_uwm_with_manifest_order(self, files, capsys):
        det = files("d.csv", DET_HEADER + "i1,vgg,1,0.1,0.9\ni1,cnn,1,0.8,0.2\ni1,irv2,1,0.7,0.3\n")
        code, out, _ = run(capsys, "pipeline", "--det", det, "--method", "uwm",
                           "--weights", "0.2,0.2,0.6", "--manifest", files("m.json", manifest()))
        assert code == 0
        assert "i1,notumor,1,false" in out


def detection_files(files, method):
    (tp, fn), (fp, tn) = DETECTION_MATRICES[method]
    truth, outcomes = ["instance_id,label"], ["instance_id,final_label,detection_class,tie_broken"]
    n = 0
    for count, true, pred in ((tp, "glioma", "glioma"), (fn, "glioma", "notumor"),
                              (fp, "notumor", "glioma"), (tn, "notumor", "notumor")):
        for _ in range(count):
            n += 1
            truth.append(f"t{n:05d},{true}")
            outcomes.append(f"t{n:05d},{pred},{1 if pred == 'notumor' else 0},false")
    return (files("o.csv", "\n".join(outcomes) + "\n"), files("t.csv", "\n".join(truth) + "\n"))


class TestEval:
    def test_detection_matrix_nwm(self, files, capsys):
        o, t = detection_files(files, "nwm")
        code, out, _ = run(capsys, "eval", o, "--truth", t, "--stage", "detection",
                           "--out", str(files.dir / "r.json"))
        assert code == 0
        assert "accuracy  99.79%" in out
        assert json.loads((files.dir / "r.json").read_text())["accuracy_percent"] == "99.79"

    def test_perfect(self, files, capsys):
        o = files("o.csv", "instance_id,final_label,detection_class,tie_broken\na,glioma,0,false\n"
                           "b,notumor,1,true\n")
        t = files("t.csv", "instance_id,label\na,glioma\nb,notumor\n")
        code, out, _ = run(capsys, "eval", o, "--truth", t)
        assert code == 0 and "100.00%" in out and "ties      1" in out

    def test_instance_mismatch(self, files, capsys):
        o = files("o.csv", "instance_id,final_label,detection_class,tie_broken\na,glioma,0,false\n")
        t = files("t.csv", "instance_id,label\nb,glioma\n")
        code, _, err = run(capsys, "eval", o, "--truth", t)
        assert code == 2 and err.startswith("error[InstanceMismatch]")


SIM_SPEC = {
    "seed": 17,
    "counts": {"glioma": 30, "meningioma": 30, "pituitary": 30, "notumor": 40},
    "detection": [{"model_id": "cnn", "correct_prob": 0.95, "runs": 3},
                  {"model_id": "irv2", "correct_prob": 0.9},
                  {"model_id": "vgg", "correct_prob": [0.7, 0.8], "concentration": 2.0}],
    "classification": [{"model_id": "cnn", "correct_prob": 0.95},
                       {"model_id": "irv2", "correct_prob": 0.9},
                       {"model_id": "vgg", "correct_prob": 0.7}],
}


class TestSimulate:
    def test_reproducible(self, files, capsys):
        spec = files("s.json", SIM_SPEC)
        for name in ("a", "b"):
            assert run(capsys, "simulate", "--spec", spec, "--out", str(files.dir / name))[0] == 0
        for f in ("detection.csv", "classification.csv", "truth.csv", "manifest.json"):
            assert (files.dir / "a" / f).read_bytes() == (files.dir / "b" / f).read_bytes()

    def test_seed_override(self, files, capsys):
        spec = files("s.json", SIM_SPEC)
        run(capsys, "simulate", "--spec", spec, "--out", str(files.dir / "a"))
        run(capsys, "simulate", "--spec", spec, "--out", str(files.dir / "b"), "--seed", "18")
        assert (files.dir / "a" / "detection.csv").read_bytes() != (files.dir / "b" / "detection.csv").read_bytes()

    def test_invalid_spec(self, files, capsys):
        code, _, err = run(capsys, "simulate", "--spec", files("s.json", {"counts": {}}),
                           "--out", str(files.dir / "x"))
        assert code == 1 and err.startswith("error[usage]")

    def test_end_to_end(self, files, capsys):
        d = files.dir / "sim"
        run(capsys, "simulate", "--spec", files("s.json", SIM_SPEC), "--out", str(d))
        for method in ("soft", "hard", "esvt", "nwm"):
            code, _, err = run(capsys, "pipeline", "--det", str(d / "detection.csv"), "--cls",
                               str(d / "classification.csv"), "--manifest", str(d / "manifest.json"),
                               "--method", method, "--out", str(d / f"{method}.csv"))
            assert code == 0, err
            code, out, _ = run(capsys, "eval", str(d / f"{method}.csv"), "--truth", str(d / "truth.csv"))
            assert code == 0 and "accuracy" in out

    def test_single_stage_spec(self, files, capsys):
        spec = {"stage": "classification", "counts": [5, 5, 5], "seed": 3,
                "models": [{"model_id": "a", "correct_prob": 0.8}]}
        code, _, _ = run(capsys, "simulate", "--spec", files("s.json", spec), "--out", str(files.dir / "one"))
        assert code == 0
        assert (files.dir / "one" / "classification.csv").exists()


def test_identical_invocations_byte_identical(files, capsys):
    det = files("d.csv", DET_HEADER + EXAMPLE_ROWS)
    outs = []
    for name in ("x.csv", "y.csv"):
        run(capsys, "fuse", det, "--stage", "detection", "--method", "uwm", "--weights",
            "0.2,0.2,0.6", "--out", str(files.dir / name))
        outs.append((files.dir / name).read_bytes())
    assert outs[0] == outs[1]


def test_unknown_flag_exits_1(capsys):
    code, _, err = run(capsys, "weights", "--manifest", "m.json", "--stage", "detection", "--nope")
    assert code == 1 and err.startswith("error[usage]")


def test_missing_file_is_data_error(capsys):
    code, _, err = run(capsys, "weights", "--manifest", "/nonexistent/m.json", "--stage", "detection")
    assert code == 2 and err.startswith("error[IOError]")


@pytest.mark.parametrize("sub,flags", [
    ("weights", ["--manifest", "--stage", "--out"]),
    ("fuse", ["--stage", "--method", "--manifest", "--weights", "--out"]),
    ("pipeline", ["--det", "--cls", "--manifest", "--method", "--weights", "--out"]),
    ("eval", ["--truth", "--stage", "--out"]),
    ("simulate", ["--spec", "--out", "--seed"]),
])
def test_help_lists_flags(sub, flags, capsys):
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args([sub, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for flag in flags:
        assert flag in text
