import json
from fractions import Fraction
from pathlib import Path

import pytest

from groupoid_index.cli_runner import ConfigError, RunReport, emit_report, load_config, main, parse_report, run_scenario

ROOT = Path(__file__).resolve().parent.parent
SCEN = ROOT / "scenarios"


def _run(tmp_path, kind, cfg_path, *extra):
    out = tmp_path / "out.txt"
    code = main([kind, "--config", str(cfg_path), "--out", str(out), *extra])
    return code, out.read_bytes()


def _write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return p


@pytest.mark.parametrize("kind,name", [
    ("check-algebroid", "check_algebroid_h3"),
    ("cohomology", "cohomology_su2"),
    ("groupoid-pairing", "groupoid_pairing_pair4"),
    ("star-verify", "star_moyal"),
    ("star-verify", "star_pbw_su2"),
    ("vanest-verify", "vanest_affine"),
    ("index-verify", "index_oscillator"),
    ("index-verify", "index_circle"),
])
def test_bundled_scenarios_pass(tmp_path, kind, name):
    code, data = _run(tmp_path, kind, SCEN / f"{name}.json")
    assert code == 0
    assert parse_report(data)["pass"] is True


def test_cohomology_report_content(tmp_path):
    _, data = _run(tmp_path, "cohomology", SCEN / "cohomology_su2.json")
    rec = {r["name"]: r for r in parse_report(data)["records"]}
    assert rec["betti"]["computed"] == [1, 0, 0, 1]


def test_index_report_values(tmp_path):
    _, data = _run(tmp_path, "index-verify", SCEN / "index_oscillator.json")
    for r in parse_report(data)["records"]:
        assert r["pass"], r


def test_output_is_byte_identical(tmp_path):
    cfg = SCEN / "groupoid_pairing_pair4.json"
    a = _run(tmp_path, "groupoid-pairing", cfg, "--seed", "7")[1]
    b = _run(tmp_path, "groupoid-pairing", cfg, "--seed", "7")[1]
    assert a == b


def test_csv_matches_golden(tmp_path):
    _, data = _run(tmp_path, "cohomology", SCEN / "cohomology_su2.json", "--format", "csv-summary")
    assert data == (Path(__file__).parent / "golden" / "cohomology_su2.csv").read_bytes()
    lines = data.decode().splitlines()
    assert lines[0].split(",")[3] == "residual"
    assert len(lines) == 3


def test_check_failure_exit_code(tmp_path):
    cfg = _write(tmp_path, {"schema_version": 1, "algebroid": "su2", "expected_betti": [1, 1, 0, 1]})
    assert _run(tmp_path, "cohomology", cfg)[0] == 1


def test_cap_overflow_is_structured_failure(tmp_path):
    cfg = _write(tmp_path, {"schema_version": 1, "algebroid": "su2", "cap": 1, "max_degree": 1})
    code, data = _run(tmp_path, "vanest-verify", cfg)
    assert code == 1
    names = [r["name"] for r in parse_report(data)["records"]]
    assert "pipeline" in names


@pytest.mark.parametrize("obj", [
    {"schema_version": 1, "bogus": 1},
    {"schema_version": 2, "algebroid": "su2"},
    {"schema_version": 1, "algebroid": "su2", "tolerances": {"x": -1}},
])
def test_configuration_errors(tmp_path, obj):
    kind = "index-verify" if "tolerances" in obj else "cohomology"
    assert main([kind, "--config", str(_write(tmp_path, obj))]) == 2


def test_missing_config_file(tmp_path):
    assert main(["cohomology", "--config", str(tmp_path / "nope.json")]) == 2


def test_invalid_json_rejected():
    with pytest.raises(ConfigError):
        load_config("{not json", "cohomology")


def test_empty_report_round_trip():
    rep = RunReport({"kind": "cohomology"})
    data = emit_report(rep)
    doc = parse_report(data)
    assert doc["records"] == [] and doc["pass"] is True
    assert emit_report(rep, "csv-summary").decode().count("\n") == 1


def test_json_round_trip_keeps_rationals():
    rep = RunReport({"kind": "x"})
    rep.add("r", Fraction(1, 3), Fraction(1, 3), 0.1, True, "TRIVIAL")
    doc = parse_report(emit_report(rep))
    assert doc["records"][0]["computed"] == Fraction(1, 3)
    assert doc["records"][0]["residual"] == 0.1
    assert parse_report(emit_report(rep)) == doc


def test_float_mode_override():
    cfg = load_config((SCEN / "cohomology_su2.json").read_text(), "cohomology")
    assert run_scenario(cfg, "cohomology", mode="float").passed
