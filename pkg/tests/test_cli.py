"""End-to-end CLI pipeline: synth, validate, run."""

import json
import re

import pytest

from relaysim import METHODS, load_topology
from relaysim.cli import main


@pytest.fixture(autouse=True)
def _no_env_out(monkeypatch):
    monkeypatch.delenv("RELAYSIM_OUT_DIR", raising=False)


def _synth(out_dir, seed=5):
    return main([
        "synth", "--relays", "1", "--duration-ms", "150000", "--step-ms", "10",
        "--seed", str(seed), "--out", str(out_dir),
    ])


# ------------------------------------------------------------------- synth

def test_synth_writes_topology_and_experiment(tmp_path, capsys):
    out = tmp_path / "topo"
    assert _synth(out) == 0
    stdout = capsys.readouterr().out
    assert "2 candidate paths" in stdout  # 1 relay: direct + the detour

    doc = json.loads((out / "experiment.json").read_text())
    assert doc["schema_version"] == 1
    assert doc["topology"] == "topology.json"
    assert doc["pairs"] == [["e0", "u0"]]
    assert doc["methods"] == list(METHODS)

    topo = load_topology(out / "topology.json")
    assert {n.name for n in topo.nodes} == {"e0", "u0", "r0"}
    # forward mesh plus the reverse direct link for feedback
    assert set(topo.traces) == {
        ("e0", "u0"), ("u0", "e0"), ("e0", "r0"), ("r0", "u0")}


def test_synth_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _synth(a) == 0
    assert _synth(b) == 0
    assert (a / "topology.json").read_bytes() == (b / "topology.json").read_bytes()
    csvs = sorted(p.relative_to(a) for p in a.rglob("*.csv"))
    assert len(csvs) == 4
    for name in csvs:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_synth_usage_errors(tmp_path, capsys):
    assert main(["synth", "--duration-ms", "0", "--out", str(tmp_path)]) == 2
    assert main(["synth", "--relays", "-1", "--out", str(tmp_path)]) == 2
    assert main(["synth"]) == 2  # no --out, no $RELAYSIM_OUT_DIR
    assert "error:" in capsys.readouterr().err


def test_synth_env_out_dir(tmp_path, monkeypatch):
    target = tmp_path / "envout"
    monkeypatch.setenv("RELAYSIM_OUT_DIR", str(target))
    assert main(["synth", "--relays", "0", "--duration-ms", "20000"]) == 0
    assert (target / "topology.json").exists()


# ---------------------------------------------------------------- validate

def test_validate_reports_each_file(tmp_path, capsys):
    out = tmp_path / "topo"
    _synth(out)
    capsys.readouterr()
    assert main(["validate", str(out)]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l.strip()]
    assert len(lines) == 4  # one diagnostic per link CSV
    assert all(re.search(r"samples=\d+ duration_ms=\d+", l) for l in lines)


def test_validate_rtt_halves_latency(tmp_path, capsys):
    out = tmp_path / "topo"
    _synth(out)
    trace_csv = sorted(out.rglob("*.csv"))[0]
    capsys.readouterr()

    def mean_of(unit):
        assert main(["validate", str(trace_csv), "--unit", unit]) == 0
        return float(re.search(r"mean_ms=([\d.]+)", capsys.readouterr().out).group(1))

    assert mean_of("rtt") == pytest.approx(mean_of("one-way") / 2, abs=0.01)


def test_validate_failures(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("this,is,not\na,trace,file\n")
    assert main(["validate", str(bad)]) == 3
    assert main(["validate", str(tmp_path / "missing.csv")]) == 3
    empty = tmp_path / "emptydir"
    empty.mkdir()
    assert main(["validate", str(empty)]) == 3
    err = capsys.readouterr().err
    assert "ERROR" in err and "no traces found" in err


# --------------------------------------------------------------------- run

@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert _synth(out) == 0
    return out


def _run(synth_dir, res_dir, *extra):
    return main([
        "run", str(synth_dir / "experiment.json"),
        "--packets", "300", "--out", str(res_dir), *extra,
    ])


def test_run_writes_full_matrix(synth_dir, tmp_path, capsys):
    res = tmp_path / "res"
    assert _run(synth_dir, res, "--jobs", "1") == 0
    stdout = capsys.readouterr().out
    assert "method means over sessions:" in stdout
    assert f"wrote {len(METHODS)} report cells" in stdout

    assert (res / "manifest.json").exists()
    effective = json.loads((res / "effective_manifest.json").read_text())
    assert effective["methods"] == list(METHODS)
    assert effective["sessions"][0]["packets"] == 300

    for label in METHODS:
        rep = json.loads((res / f"s0_{label}.json").read_text())
        assert rep["delivered"] + rep["dropped_late"] == 300
        assert (res / f"s0_{label}_cdf.csv").exists()
    rows = (res / "summary.csv").read_text().splitlines()
    assert len(rows) == 2 + len(METHODS)  # schema row, header, one per cell


def test_run_parallel_matches_serial(synth_dir, tmp_path):
    serial, parallel = tmp_path / "s", tmp_path / "p"
    assert _run(synth_dir, serial, "--jobs", "1") == 0
    assert _run(synth_dir, parallel, "--jobs", "2") == 0
    assert (serial / "summary.csv").read_bytes() == (parallel / "summary.csv").read_bytes()


def test_run_methods_subset(synth_dir, tmp_path):
    res = tmp_path / "res"
    assert _run(synth_dir, res, "--jobs", "1", "--methods", "drt-bf,drt-wm") == 0
    assert sorted(p.name for p in res.glob("s0_*.json")) == [
        "s0_drt-bf.json", "s0_drt-wm.json"]


def test_run_single_custom_method(synth_dir, tmp_path):
    res = tmp_path / "res"
    assert _run(synth_dir, res, "--jobs", "1", "--router", "direct",
                "--jitter", "buffer") == 0
    rep = json.loads((res / "s0_direct_buffer.json").read_text())
    assert rep["method"] == "direct+buffer"
    assert rep["jitter_kind"] == "buffer"


def test_run_seed_flag_overrides(synth_dir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run(synth_dir, a, "--jobs", "1", "--methods", "vcr-wm") == 0
    assert _run(synth_dir, b, "--jobs", "1", "--methods", "vcr-wm",
                "--seed", "99") == 0
    assert (a / "summary.csv").read_bytes() != (b / "summary.csv").read_bytes()


def test_run_inline_synthetic_topology(tmp_path):
    manifest = tmp_path / "exp.json"
    manifest.write_text(json.dumps({
        "schema_version": 1,
        "synthetic": {"relays": 0, "duration_ms": 15000.0, "step_ms": 100.0,
                      "seed": 3},
        "pairs": [["e0", "u0"]],
        "methods": ["drt-wm"],
        "defaults": {"packets": 50, "warmup_ms": 10000.0},
        "output_dir": "results",
    }))
    assert main(["run", str(manifest), "--jobs", "1"]) == 0
    rep = json.loads((tmp_path / "results" / "s0_drt-wm.json").read_text())
    assert rep["warmup_ms"] == 10000.0
    assert rep["delivered"] + rep["dropped_late"] == 50


def test_run_manifest_errors(tmp_path, capsys):
    def attempt(doc):
        path = tmp_path / "m.json"
        path.write_text(json.dumps(doc))
        return main(["run", str(path), "--out", str(tmp_path / "o")])

    assert main(["run", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "o")]) == 3
    assert attempt({"schema_version": 2}) == 3
    base = {"schema_version": 1,
            "synthetic": {"relays": 0, "duration_ms": 15000.0, "step_ms": 100.0},
            "pairs": [["e0", "u0"]], "methods": ["drt-wm"],
            "defaults": {"packets": 10, "warmup_ms": 5000.0}}
    assert attempt({**base, "topology": "t.json"}) == 3  # both sources
    assert attempt({**base, "pairs": []}) == 3
    assert attempt({**base, "pairs": [["e0", "e0"]]}) == 3
    assert attempt({**base, "methods": ["bogus"]}) == 3
    assert attempt({**base, "defaults": {"packet_count": 10}}) == 3
    assert "error:" in capsys.readouterr().err


def test_run_jobs_usage_error(synth_dir, tmp_path):
    assert _run(synth_dir, tmp_path / "o", "--jobs", "0") == 2
