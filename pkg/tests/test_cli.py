import json
import subprocess
import sys
from pathlib import Path

import pytest

from spacepki.cli import SCENARIO_DIR, main
from spacepki.scenarios import read_csv_records

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"


def _scenario_file(tmp_path, name, mutate):
    d = json.loads((SCENARIO_DIR / f"{name}.json").read_text())
    mutate(d)
    p = tmp_path / f"{name}_edit.json"
    p.write_text(json.dumps(d))
    return p


def test_run_csv_mean_near_sixty_ms(tmp_path, capsys):
    out = tmp_path / "case1.csv"
    assert main(["run", "--scenario", "ipki_case1", "--format", "csv", "--out", str(out)]) == 0
    rows = read_csv_records(out.read_text())
    mean = sum(r["total_s"] for r in rows) / len(rows)
    assert mean == pytest.approx(0.060, abs=0.001)
    text = out.read_text()
    assert text.startswith("# header ")
    assert "#summary,total_s,mean," in text
    assert "mean total" in capsys.readouterr().err


def test_run_json_to_stdout(capsys):
    assert main(["run", "--scenario", "spcpki_local"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["header"]["scheme"] == "SPCPKI_LOCAL" and len(d["records"]) == 10


def test_run_with_trace(tmp_path):
    out = tmp_path / "r.json"
    assert main(["run", "--scenario", "ipki_case1", "--out", str(out), "--trace"]) == 0
    trace = tmp_path / "r.trace.jsonl"
    lines = trace.read_text().splitlines()
    assert lines and all(json.loads(ln)["time_s"] >= 0 for ln in lines)
    report = json.loads(out.read_text())
    import hashlib
    digest = hashlib.sha256("".join(ln + "\n" for ln in lines).encode()).hexdigest()
    assert report["trace_digest"] == digest


def test_seed_and_duration_overrides(tmp_path):
    out = tmp_path / "r.json"
    assert main(["run", "--scenario", "ipki_constellation", "--seed", "11", "--duration", "600",
                 "--out", str(out)]) == 0
    h = json.loads(out.read_text())["header"]
    assert h["seed"] == 11 and h["duration_s"] == 600.0


def test_compare_golden_bundle(capsys):
    assert main(["compare", "--golden"]) == 0
    out = capsys.readouterr().out
    rows = {ln.split()[0]: float(ln.split()[4]) for ln in out.splitlines()[1:]}
    assert rows["ipki_case1"] == pytest.approx(60.0, abs=1.0)
    assert rows["ipki_case1_meo"] == pytest.approx(33.0, abs=1.0)
    assert rows["ipki_case2"] == pytest.approx(232.0, abs=2.0)
    assert rows["ipki_case2_meo"] == pytest.approx(205.0, abs=2.0)
    assert rows["relay_geo"] == pytest.approx(492.0, rel=0.05)


def test_compare_schemes_writes_json(tmp_path, capsys):
    out = tmp_path / "cmp.json"
    rc = main(["compare", "--scenario", "comparison", "--schemes", "SPCPKI_LOCAL,IPKI_CASE1",
               "--out", str(out)])
    assert rc == 0
    d = json.loads(out.read_text())
    assert [r["scheme"] for r in d["rows"]] == ["SPCPKI_LOCAL", "IPKI_CASE1"]


def test_compare_unknown_scheme(capsys):
    assert main(["compare", "--scenario", "comparison", "--schemes", "FOO"]) == 2
    assert "unknown scheme 'FOO'" in capsys.readouterr().err


def test_windows_leo_passes(tmp_path, capsys):
    d = {"schema_version": "1.0", "name": "w", "scheme": "DELAYED_GROUND", "duration_s": 86_400.0,
         "nodes": [{"id": "SPC_RP:0", "entity": "SatB", "orbit": {"altitude_km": 500.0}},
                   {"id": "GROUND_STATION:0", "site": {"lat_deg": 0.0, "lon_deg": 0.0}}],
         "trust": {"agencies": [{"name": "PKI1", "members": ["SatB", "SatA"]}]},
         "workload": {"requests": []}}
    p = tmp_path / "w.json"
    p.write_text(json.dumps(d))
    assert main(["windows", "--scenario", str(p), "--pair", "SatB,GROUND_STATION:0"]) == 0
    lines = capsys.readouterr().out.splitlines()
    durations = [float(ln.split("duration")[1].split()[0]) for ln in lines[1:]]
    inner = durations[1:-1]
    assert len(inner) >= 4 and all(5.0 <= m <= 12.0 for m in inner)


def test_windows_geo_and_polar(capsys):
    assert main(["windows", "--scenario", "coverage", "--pair", "RELAY:0,GROUND_STATION:1"]) == 0
    out = capsys.readouterr().out
    assert "1 window(s)" in out and "86400.0" in out
    assert main(["windows", "--scenario", "coverage", "--pair", "RELAY:0,GROUND_STATION:2"]) == 0
    assert "0 window(s)" in capsys.readouterr().out


def test_windows_unknown_pair(capsys):
    assert main(["windows", "--scenario", "coverage", "--pair", "RELAY:0,Nowhere"]) == 2
    assert "unknown pair member 'Nowhere'" in capsys.readouterr().err


def test_validate_bridge_fixture(capsys):
    rc = main(["validate", "--fixture", str(FIXTURES / "bridge_valid.json"),
               "--target", "SatA", "--anchor", "Grd-BCA", "--at", "100"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "status: VALID" in out and "path (4): Grd-BCA -> PKI2-PCA -> PKI2-CA1 -> SatA" in out


def test_validate_revoked_and_expired(capsys):
    rc = main(["validate", "--fixture", str(FIXTURES / "bridge_revoked_intermediate.json"),
               "--target", "SatA", "--anchor", "Grd-BCA", "--at", "200", "--format", "json"])
    captured = capsys.readouterr()
    assert rc == 1 and json.loads(captured.out)["status"] == "REVOKED"
    assert "REVOKED" in captured.err
    rc = main(["validate", "--fixture", str(FIXTURES / "bridge_expired_target.json"),
               "--target", "SatC", "--anchor", "Grd-BCA", "--at", "7200"])
    assert rc == 1 and "status: EXPIRED" in capsys.readouterr().out


def test_validate_fixture_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema_version": "1.0",\n "anchors": [}')
    assert main(["validate", "--fixture", str(bad), "--target", "X", "--anchor", "Y"]) == 2
    assert f"{bad}:2:" in capsys.readouterr().err
    d = json.loads((FIXTURES / "bridge_valid.json").read_text())
    d["schema_version"] = "2.0"
    d["anchors"][0]["signature"] = "00"
    bad.write_text(json.dumps(d))
    assert main(["validate", "--fixture", str(bad), "--target", "SatA", "--anchor", "Grd-BCA"]) == 2
    err = capsys.readouterr().err
    assert "schema_version" in err and "not a valid self-signed" in err
    assert main(["validate", "--fixture", str(FIXTURES / "bridge_valid.json"),
                 "--target", "Nobody", "--anchor", "Grd-BCA"]) == 2


def test_schema_version_rejected(tmp_path, capsys):
    p = _scenario_file(tmp_path, "ipki_case1", lambda d: d.update(schema_version="2.0"))
    assert main(["run", "--scenario", str(p)]) == 2
    assert "unsupported schema_version '2.0'" in capsys.readouterr().err


def test_unknown_actor_reference_aggregated(tmp_path, capsys):
    def mutate(d):
        d["workload"]["requests"][0]["requester"] = "Ghost"
        d["workload"]["requests"][1]["target"] = "Phantom"

    p = _scenario_file(tmp_path, "ipki_case1", mutate)
    assert main(["run", "--scenario", str(p)]) == 2
    err = capsys.readouterr().err.splitlines()
    assert any("Ghost" in e for e in err) and any("Phantom" in e for e in err)
    assert all(e.startswith(f"error: {p}") for e in err)


def test_parse_error_has_location(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text('{\n  "schema_version": "1.0",\n  "nodes": [,]\n}')
    assert main(["run", "--scenario", str(p)]) == 2
    assert f"{p}:3:" in capsys.readouterr().err


def test_missing_scenario_and_unwritable_output(tmp_path, capsys):
    assert main(["run", "--scenario", "does_not_exist"]) == 2
    assert "not found" in capsys.readouterr().err
    bad_out = tmp_path / "no" / "such" / "dir" / "r.json"
    assert main(["run", "--scenario", "ipki_case1", "--out", str(bad_out)]) == 2
    assert f"cannot write {bad_out}" in capsys.readouterr().err


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "spacepki", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("spacepki ")
