import csv
import json
import re
import subprocess
import sys
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from gazevol.cli import main
from gazevol.errors import InputError
from gazevol.pipeline import TABLE_COLUMNS, run_report
from gazevol.synth import generate_batch

from helpers import apply_h, write_published_stats

GRID_256 = np.stack(np.meshgrid(np.arange(0, 256, 8), np.arange(0, 256, 8)), -1).reshape(-1, 2).astype(float)


def _rms_err(h1, h2):
    """RMS scene-px disagreement of two homographies over a grid on the 256x256 slice."""
    d = apply_h(np.array(h1), GRID_256) - apply_h(np.array(h2), GRID_256)
    return float(np.sqrt((d**2).sum(axis=1).mean()))


@pytest.fixture(scope="module")
def batch(tmp_path_factory):
    d = tmp_path_factory.mktemp("batch")
    generate_batch(d, "mixed", 11, 6, reader="Synth A")
    return d


def _table(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_analyze_six_cases_one_scenario(batch, tmp_path):
    out = tmp_path / "o"
    assert main(["analyze", "--manifest", str(batch / "manifest.json"), "--out", str(out), "--scenario", "1"]) == 0
    rows = _table(out / "table.csv")
    assert len(rows) == 6
    assert list(rows[0]) == TABLE_COLUMNS
    for r in rows:
        assert all(r[c] != "" for c in TABLE_COLUMNS)


def test_analyze_both_scenarios_matches_truth(batch, tmp_path):
    out = tmp_path / "o"
    assert main(["analyze", "--manifest", str(batch / "manifest.json"), "--out", str(out), "--jobs", "2"]) == 0
    rows = _table(out / "table.csv")
    assert len(rows) == 12
    manifest = json.loads((batch / "manifest.json").read_text())
    truth = {c["case"]: c["truth"] for c in manifest["cases"]}
    for r in rows:
        t = truth[r["case"]][r["scenario"]]
        assert int(r["n_switches"]) == t["n_switches"]
        assert int(r["n_revisits"]) == t["n_revisits"]
        assert float(r["total_s"]) == pytest.approx(t["total_s"], abs=1e-9)
        assert float(r["coverage_pct"]) == t["coverage_pct"]
    for case in truth:
        res = json.loads((out / f"{case}.json").read_text())
        assert res["scenarios"]["2"]["n_qualifying"] >= res["scenarios"]["1"]["n_qualifying"]
        assert (out / f"{case}_density.csv").exists()
        ET.fromstring((out / f"{case}_s1.svg").read_text())


def test_determinism(batch, tmp_path):
    args = ["analyze", "--manifest", str(batch / "manifest.json"), "--classify", "1.0"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--jobs", "3"]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for n in names:
        a, b = (tmp_path / "a" / n).read_text(), (tmp_path / "b" / n).read_text()
        if n.endswith(".svg"):
            ta, tb = ET.fromstring(a), ET.fromstring(b)
            assert [(e.tag, e.attrib) for e in ta.iter()] == [(e.tag, e.attrib) for e in tb.iter()]
        else:
            assert a == b, n


def test_single_case_flags_and_scene_alignment(batch, tmp_path):
    p = lambda s: str(batch / f"case01_{s}")
    common = ["analyze", "--gaze", p("gaze.csv"), "--trace", p("trace.csv"), "--volume", p("volume.json"),
              "--mask", p("mask.json"), "--case", "c1", "--reader", "R"]
    assert main(common + ["--homography", p("homography.json"), "--out", str(tmp_path / "h")]) == 0
    assert main(common + ["--scene", p("scene.png"), "--out", str(tmp_path / "s")]) == 0
    a = json.loads((tmp_path / "h" / "c1.json").read_text())
    b = json.loads((tmp_path / "s" / "c1.json").read_text())
    # ORB-estimated alignment stays within a couple of scene px of the planted one; visit structure agrees
    assert _rms_err(a["homography"]["h"], b["homography"]["h"]) < 2.0
    assert b["homography"]["slice"] is not None
    for s in ("1", "2"):
        assert abs(a["scenarios"][s]["stats"]["n_switches"] - b["scenarios"][s]["stats"]["n_switches"]) <= 1


def test_missing_mask_exit_1(batch, tmp_path, capsys):
    p = lambda s: str(batch / f"case01_{s}")
    missing = str(tmp_path / "nope_mask.json")
    code = main(["analyze", "--gaze", p("gaze.csv"), "--trace", p("trace.csv"), "--volume", p("volume.json"),
                 "--mask", missing, "--homography", p("homography.json"), "--out", str(tmp_path / "o")])
    assert code == 1
    assert missing in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_failed_case_leaves_no_partial_outputs(batch, tmp_path):
    bad = tmp_path / "bad"
    bad.mkdir()
    manifest = json.loads((batch / "manifest.json").read_text())
    for c in manifest["cases"]:
        for k, f in c["files"].items():
            c["files"][k] = str(batch / f)
    (bad / "broken_gaze.csv").write_text("t,x,y\n0,1,1\n0.1,oops,1\n")
    manifest["cases"][3]["files"]["gaze"] = str(bad / "broken_gaze.csv")
    (bad / "manifest.json").write_text(json.dumps(manifest))
    out = tmp_path / "o"
    assert main(["analyze", "--manifest", str(bad / "manifest.json"), "--out", str(out)]) == 1
    assert not out.exists() or list(out.iterdir()) == []


def test_alignment_failure_exit_2(batch, tmp_path):
    import cv2
    noise = np.random.default_rng(0).integers(0, 256, (400, 400), dtype=np.uint8)
    cv2.imwrite(str(tmp_path / "noise.png"), noise)
    assert main(["align", "--scene", str(tmp_path / "noise.png"), "--volume", str(batch / "case01_volume.json")]) == 2


def test_align_command(batch, tmp_path, capsys):
    assert main(["align", "--scene", str(batch / "case01_scene.png"), "--volume", str(batch / "case01_volume.json"),
                 "--slice", "auto", "--seed", "3"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out) == {"h", "inliers", "rmse", "slice"}
    planted = json.loads((batch / "case01_homography.json").read_text())["h"]
    assert _rms_err(out["h"], planted) < 2.0


def test_config_precedence(batch, tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('jump-k = 2.5\ntheta = 2.0\nout = "%s"\n' % (tmp_path / "from_cfg"))
    args = ["analyze", "--manifest", str(batch / "manifest.json"), "--config", str(cfg), "--no-svg"]
    assert main(args + ["--theta", "1.0"]) == 0
    res = json.loads((tmp_path / "from_cfg" / "case01.json").read_text())
    assert res["parameters"]["jump_k"] == 2.5  # from file
    assert res["parameters"]["theta_deg"] == 1.0  # flag wins
    assert res["parameters"]["ppc"] == 38.4  # default
    assert not list((tmp_path / "from_cfg").glob("*.svg"))


def test_bad_config(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("this is = = not toml")
    assert main(["analyze", "--config", str(cfg), "--gaze", "x"]) == 1


def test_out_of_range_parameter(batch, tmp_path):
    assert main(["analyze", "--manifest", str(batch / "manifest.json"), "--theta", "45", "--out", str(tmp_path)]) == 1


def test_synth_command(tmp_path):
    assert main(["synth", "--archetype", "scanner", "--seed", "2", "--cases", "1", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "manifest.json").exists()


def test_report_published_rows(tmp_path, capsys):
    files = write_published_stats(tmp_path, "Rad A")
    assert main(["report", *files]) == 0
    rep = json.loads(capsys.readouterr().out)["readers"]["Rad A"]
    assert rep["1"]["mean_of_medians"] == pytest.approx(2.39, abs=0.005)
    assert rep["2"]["mean_of_medians"] == pytest.approx(0.963, abs=0.001)


def test_report_rad_b_six(tmp_path):
    rep = run_report(write_published_stats(tmp_path, "Rad B"))["readers"]["Rad B"]["1"]
    assert rep["mean_of_medians"] == pytest.approx(1.10, abs=0.005)
    assert rep["mean_of_medians"] == pytest.approx(1.09, abs=0.02)
    assert rep["n_cases"] == 6


def test_report_single_row(tmp_path):
    (f,) = write_published_stats(tmp_path, "Rad A", n_cases=1)
    rep = run_report([f])["readers"]["Rad A"]["1"]
    assert (rep["mean_of_means"], rep["mean_of_medians"], rep["mean_n_switches"]) == (1.96, 1.40, 40)


def test_report_from_analyze_output(batch, tmp_path):
    out = tmp_path / "o"
    assert main(["analyze", "--manifest", str(batch / "manifest.json"), "--out", str(out), "--no-svg"]) == 0
    rep = run_report(sorted(str(p) for p in out.glob("case*.json") if not p.name.endswith("_density.csv")))
    assert rep["readers"]["Synth A"]["1"]["n_cases"] == 6


def test_report_malformed(tmp_path):
    (tmp_path / "x.json").write_text('{"case": "a"}')
    with pytest.raises(InputError, match="malformed"):
        run_report([str(tmp_path / "x.json")])
    assert main(["report", str(tmp_path / "x.json")]) == 1
    assert main(["report", str(tmp_path / "missing.json")]) == 1


def test_console_script_help():
    r = subprocess.run([sys.executable, "-m", "gazevol.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("analyze", "align", "synth", "report"):
        assert cmd in r.stdout
