from __future__ import annotations

import json

import pytest

from pecsim import cli
from pecsim.config import SchemaError, load_config, validate
from pecsim.metrics import MalformedTrace, metrics_fold, parse_trace
from pecsim.scenarios import SAMPLES, compute_reuse, thunk_protocol
from pecsim.sim import Simulation


def test_validate_ok_summary():
    report = validate(compute_reuse())
    text = report.render()
    assert report.ok and text.startswith("OK\n")
    assert "requests: 10" in text and "links: 13" in text


def test_validate_undefined_server():
    raw = compute_reuse()
    raw["nodes"][1]["server"] = "es9"
    report = validate(raw)
    assert not report.ok
    assert any("undefined server id 'es9'" in e for e in report.errors)


def test_validate_mobility_mismatch():
    raw = compute_reuse()
    raw["nodes"].append({"id": "ap2", "role": "access_point", "server": "es1"})
    raw["links"].append({"a": "ap2", "b": "es1", "latency_ms": 1, "bandwidth_bps": 1e6})
    raw["mobility"] = [{"at_ms": 5, "user": "u0", "from": "ap2", "to": "ap1"}]
    report = validate(raw)
    assert report.errors == [
        'mobility[0] {"at_ms": 5, "from": "ap2", "to": "ap1", "user": "u0"}: '
        "from_ap mismatch, 'u0' is attached to 'ap1'"
    ]
    raw["mobility"][0].update({"from": "ap1", "to": "es1"})
    assert any("expected access_point" in e for e in validate(raw).errors)


def test_schema_error_lists_problems():
    raw = compute_reuse()
    del raw["nodes"][0]["role"]
    with pytest.raises(SchemaError) as exc:
        load_config(raw)
    assert exc.value.errors


@pytest.mark.parametrize("name", sorted(SAMPLES))
def test_samples_validate(name):
    assert validate(SAMPLES[name]()).ok


def test_empty_trace_folds_to_zero():
    m = metrics_fold([])
    assert m.requests == 0 and m.reuse_savings == 0 and m.cs_hit_ratio == 0.0
    assert m.to_csv().splitlines()[:2] == ["metric,value", "format,pec-sim-metrics/1"]


def test_fold_matches_live_metrics():
    sim = Simulation(load_config(compute_reuse()))
    sim.run()
    header, records = parse_trace(sim.trace_lines())
    assert header["seed"] == 7
    assert metrics_fold(records) == sim.metrics
    assert sim.metrics.reuse_savings == 9


def test_malformed_traces():
    good = Simulation(load_config(thunk_protocol()))
    good.run()
    lines = good.trace_lines()
    with pytest.raises(MalformedTrace):
        parse_trace(lines[1:])
    bad_version = json.loads(lines[0])
    bad_version["version"] = 2
    with pytest.raises(MalformedTrace):
        parse_trace([json.dumps(bad_version)] + lines[1:])
    rec = json.loads(lines[1])
    del rec["faces"]
    with pytest.raises(MalformedTrace):
        parse_trace([lines[0], json.dumps(rec)])
    late, early = json.loads(lines[-1]), json.loads(lines[1])
    assert late["time"] > early["time"]
    with pytest.raises(MalformedTrace):
        parse_trace([lines[0], json.dumps(late), json.dumps(early)])


def write(tmp_path, raw, name="s.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return str(path)


def test_cli_run_and_fold(tmp_path, capsys):
    scenario = write(tmp_path, compute_reuse())
    trace, live, folded = tmp_path / "t.jsonl", tmp_path / "m.csv", tmp_path / "f.csv"
    assert cli.main(["run", scenario, "--trace", str(trace), "--metrics", str(live)]) == 0
    assert cli.main(["fold", str(trace), "--metrics", str(folded)]) == 0
    assert live.read_text() == folded.read_text()
    assert "reuse_savings,9" in live.read_text()


def test_cli_seed_override_changes_header(tmp_path):
    scenario = write(tmp_path, thunk_protocol())
    trace = tmp_path / "t.jsonl"
    assert cli.main(["run", scenario, "--seed", "42", "--trace", str(trace), "--metrics", str(tmp_path / "m")]) == 0
    assert json.loads(trace.read_text().splitlines()[0])["seed"] == 42


def test_cli_validate_exit_codes(tmp_path, capsys):
    assert cli.main(["validate", write(tmp_path, compute_reuse())]) == 0
    assert capsys.readouterr().out.startswith("OK")
    raw = compute_reuse()
    raw["nodes"][1]["server"] = "es9"
    assert cli.main(["validate", write(tmp_path, raw, "bad.json")]) == 1
    (tmp_path / "junk.json").write_text("{nope")
    assert cli.main(["run", str(tmp_path / "junk.json")]) == 1


def test_cli_runtime_violation_exit_code(tmp_path, monkeypatch, capsys):
    from pecsim.engine import RuntimeInvariantViolation

    def boom(self, until=None):
        raise RuntimeInvariantViolation("pit leak", {"time": 1, "node": "es1", "kind": "pit_leak",
                                                      "name": "/x", "faces": [], "bytes": 0, "annotation": {}})

    monkeypatch.setattr(Simulation, "run", boom)
    assert cli.main(["run", write(tmp_path, thunk_protocol())]) == 2
    err = capsys.readouterr().err
    assert "pit leak" in err and '"kind":"pit_leak"' in err


def test_cli_fold_rejects_malformed(tmp_path):
    (tmp_path / "t.jsonl").write_text('{"time": 0}\n')
    assert cli.main(["fold", str(tmp_path / "t.jsonl")]) == 1
