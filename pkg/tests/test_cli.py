import csv
import json

import numpy as np
import pytest

from remotestrat.cli import main
from remotestrat.synth import corr_from_upper, equiprobable_thresholds


def run(*argv, environ=None):
    return main([str(a) for a in argv], environ={} if environ is None else environ)


def _geo_spec(path, n=400, seed=1):
    t4, t3 = equiprobable_thresholds(4).tolist(), equiprobable_thresholds(3).tolist()
    R = corr_from_upper(7, [0.5] * 21)
    doc = {"kind": "ordinal", "schema": "geographic", "n": n, "seed": seed, "groups": 3,
           "correlation": R.tolist(), "thresholds": [t4, t3, t3, t4, t3, t3, t4]}
    path.write_text(json.dumps(doc))
    return path


def _wealth_spec(path, n=1200, seed=2):
    counts = [5, 4, 4, 3, 3, 3, 2, 2, 2]
    R = corr_from_upper(9, [0.4] * 36)
    doc = {"kind": "ordinal", "schema": "wealth", "n": n, "seed": seed, "groups": 60,
           "correlation": R.tolist(), "thresholds": [equiprobable_thresholds(k).tolist() for k in counts]}
    path.write_text(json.dumps(doc))
    return path


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_validate_bundled_schema(capsys):
    assert run("validate", "--schema", "geographic") == 0
    assert "7 variables" in capsys.readouterr().out


def test_missing_schema_exit_code(tmp_path, capsys):
    assert run("validate", "--schema", tmp_path / "none.json") == 2
    assert "not found" in capsys.readouterr().err


def test_missing_frame_exit_code(tmp_path):
    assert run("simulate", "--frame", tmp_path / "nope.csv", "--out", tmp_path / "o") == 2


def test_geographic_index(tmp_path):
    assert run("synth", "--spec", _geo_spec(tmp_path / "g.json"), "--out", tmp_path / "geo") == 0
    assert run("validate", "--schema", "geographic", "--data", tmp_path / "geo/records.csv") == 0
    assert run("index", "--schema", "geographic", "--data", tmp_path / "geo/records.csv",
               "--out", tmp_path / "gi") == 0
    w = rows(tmp_path / "gi/weights.csv")
    assert w[0] == ["variable", "score1", "score2", "score3", "score4"]
    assert [r[0] for r in w[1:]] == [f"var{i}" for i in range(1, 8)]
    assert w[2][4] == ""  # three-category variable leaves score4 blank
    idx = rows(tmp_path / "gi/index.csv")
    vals = [float(r[2]) for r in idx[1:]]
    assert min(vals) == 0.0 and max(vals) == 100.0
    m = json.loads((tmp_path / "gi/manifest.json").read_text())
    assert m["config"]["role"] == "geographic"
    assert len(rows(tmp_path / "gi/correlation.csv")) == 8


def test_wealth_pipeline_to_simulate(tmp_path):
    run("synth", "--spec", _geo_spec(tmp_path / "g.json", n=60), "--out", tmp_path / "geo")
    run("index", "--schema", "geographic", "--data", tmp_path / "geo/records.csv", "--out", tmp_path / "gi")
    assert run("synth", "--spec", _wealth_spec(tmp_path / "w.json"), "--out", tmp_path / "hh") == 0
    villages = [r[0] for r in rows(tmp_path / "geo/records.csv")[1:]]
    with open(tmp_path / "bv.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["block_id", "village_id"])
        for b in range(1, 61):
            w.writerow([f"g{b}", villages[b % len(villages)]])
    assert run("index", "--schema", "wealth", "--data", tmp_path / "hh/records.csv", "--out", tmp_path / "wi",
               "--block-villages", tmp_path / "bv.csv", "--difficulty", tmp_path / "gi/index.csv") == 0
    frame = rows(tmp_path / "wi/frame.csv")
    assert frame[0] == ["block_id", "village_id", "wealth_concentration", "households", "difficulty"]
    assert len(frame) == 61
    assert all(r[4] for r in frame[1:])
    assert run("simulate", "--frame", tmp_path / "wi/frame.csv", "--out", tmp_path / "sim", "--n", 40) == 0
    assert len(rows(tmp_path / "sim/scenarios.csv")) == 16


@pytest.fixture
def papua_frame(tmp_path):
    assert run("synth", "--preset", "papua", "--blocks", 800, "--out", tmp_path / "s") == 0
    return tmp_path / "s/frame.csv"


def test_simulate_default_and_corner(tmp_path, papua_frame):
    assert run("simulate", "--frame", papua_frame, "--out", tmp_path / "a") == 0
    sc = rows(tmp_path / "a/scenarios.csv")
    assert len(sc) == 16
    assert {r[-1] for r in sc[1:]} == {"ok"}
    vm = rows(tmp_path / "a/variance_matrix.csv")
    assert vm[1][1] == ""
    assert run("simulate", "--frame", papua_frame, "--out", tmp_path / "b", "--include-corner") == 0
    assert len(rows(tmp_path / "b/scenarios.csv")) == 17
    assert rows(tmp_path / "b/variance_matrix.csv")[1][1] != ""


def test_simulate_is_byte_identical(tmp_path, papua_frame):
    for d in ("r1", "r2"):
        assert run("simulate", "--frame", papua_frame, "--out", tmp_path / d, "--n", 30) == 0
    for name in ("variance_matrix.csv", "scenarios.csv", "manifest.json", "quadrants.svg"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()


def test_replay(tmp_path, papua_frame):
    run("simulate", "--frame", papua_frame, "--out", tmp_path / "r1", "--n", 30, "--grid", "3x2")
    assert run("simulate", "--replay", tmp_path / "r1/manifest.json", "--out", tmp_path / "r2") == 0
    assert (tmp_path / "r1/scenarios.csv").read_bytes() == (tmp_path / "r2/scenarios.csv").read_bytes()


def test_environment_override(tmp_path, papua_frame):
    env = {"REMOTESTRAT_N": "24", "REMOTESTRAT_INCLUDE_CORNER": "1"}
    assert run("simulate", "--frame", papua_frame, "--out", tmp_path / "e", environ=env) == 0
    sc = rows(tmp_path / "e/scenarios.csv")
    assert len(sc) == 17
    assert {r[3] for r in sc[1:]} == {"24"}
    # the command line wins
    assert run("simulate", "--frame", papua_frame, "--out", tmp_path / "f", "--n", "32", environ=env) == 0
    assert {r[3] for r in rows(tmp_path / "f/scenarios.csv")[1:]} == {"32"}


def test_synth_seed_determinism(tmp_path):
    for d in ("a", "b"):
        assert run("synth", "--preset", "papua", "--blocks", 200, "--seed", 4, "--out", tmp_path / d) == 0
    assert (tmp_path / "a/frame.csv").read_bytes() == (tmp_path / "b/frame.csv").read_bytes()
    m = json.loads((tmp_path / "a/manifest.json").read_text())
    assert m["generator"] == "numpy.random.PCG64" and m["seed"] == 4


def test_synth_too_few_blocks(tmp_path, capsys):
    assert run("synth", "--preset", "papua", "--blocks", 3, "--out", tmp_path / "x") == 1
    assert "minimum" in capsys.readouterr().err


def test_output_may_not_be_input(tmp_path, papua_frame):
    assert run("simulate", "--frame", papua_frame, "--out", papua_frame) == 1
