import hashlib
import json
import subprocess
import sys

import pytest

from initiative import fixture_paths
from initiative.cli import build_parser, main

FAST = ["--replicas", "3", "--bootstrap-rounds", "50"]
ALL_ARTIFACTS = {
    "interevent.tsv", "link_mixture.tsv", "person_mixture.tsv", "turn_curve.tsv",
    "ending_curve.tsv", "persons.tsv", "report.json", "manifest.json",
}


def load(path):
    return json.loads(path.read_text())


@pytest.fixture(scope="module")
def fast_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["run", "--fixture", "--out", str(out), *FAST]) == 0
    return out


def test_full_run_artifacts(fast_run):
    assert {p.name for p in fast_run.iterdir()} == ALL_ARTIFACTS
    manifest = load(fast_run / "manifest.json")
    assert manifest["status"] == "ok"
    assert set(manifest["artifacts"]) == ALL_ARTIFACTS
    assert [s["stage"] for s in manifest["stages"]] == [
        "ingest", "extract", "estimate", "bootstrap", "dynamics", "persons"]
    assert manifest["config"]["replicas"] == 3
    assert manifest["tool"]["version"]
    for name, digest in manifest["checksums"].items():
        assert hashlib.sha256((fast_run / name).read_bytes()).hexdigest() == digest
    events, _ = fixture_paths()
    assert manifest["inputs"][events] == hashlib.sha256(open(events, "rb").read()).hexdigest()


def test_report_contents(fast_run):
    report = load(fast_run / "report.json")
    assert "\"seconds\"" not in json.dumps(report)
    assert report["link_mixture"]["converged"]
    assert set(report["persons"]["trait_correlations"]) == {
        "agreeableness", "conscientiousness", "extraversion", "neuroticism", "openness"}
    assert report["dynamics"]["turn_fit"]["b"] > 0
    assert report["bootstrap"]["link"]["replicas"] == 3


def test_tsv_headers(fast_run):
    heads = {p.name: p.read_text().splitlines()[0] for p in fast_run.glob("*.tsv")}
    assert heads["link_mixture.tsv"] == "mu\tweight"
    assert heads["turn_curve.tsv"] == "x\tobservations\tturns\tprobability"
    assert heads["ending_curve.tsv"] == "x\tending_probability"
    assert heads["persons.tsv"] == "person\toutgoing\ttotal\tmu_p\tfriend_abundance\teligible"


def test_report_subcommand(fast_run, capsys):
    assert main(["report", str(fast_run)]) == 0
    text = capsys.readouterr().out
    assert "link mixture" in text and "turn probability" in text


def test_skip_dynamics(tmp_path):
    assert main(["run", "--fixture", "--out", str(tmp_path), "--skip-dynamics", "--skip-bootstrap", *FAST]) == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert "turn_curve.tsv" not in names and "ending_curve.tsv" not in names
    report = load(tmp_path / "report.json")
    assert report["dynamics"] == {"skipped": True}
    assert report["bootstrap"] == {"skipped": True}


def test_missing_input(tmp_path):
    assert main(["run", str(tmp_path / "nope.tsv"), "--out", str(tmp_path)]) == 3
    manifest = load(tmp_path / "manifest.json")
    assert manifest["status"] == "failed"
    assert manifest["failed_stage"] == "ingest"


def test_malformed_input_and_lenient(tmp_path):
    src = tmp_path / "e.tsv"
    src.write_text("ts\tfrom\tto\tchannel\n1\ta\tb\tfax\n2\ta\tb\tcall\n")
    assert main(["ingest", str(src), "--out", str(tmp_path / "strict")]) == 3
    assert main(["ingest", str(src), "--lenient", "--out", str(tmp_path / "lenient")]) == 0
    report = load(tmp_path / "lenient" / "report.json")
    assert report["ingest"]["rejected"] == 1 and report["ingest"]["kept"] == 1


def test_numerical_failure_exit_code(tmp_path):
    src = tmp_path / "empty.tsv"
    src.write_text("ts\tfrom\tto\tchannel\n")
    assert main(["estimate", str(src), "--out", str(tmp_path)]) == 4
    assert load(tmp_path / "manifest.json")["failed_stage"] == "estimate"


def test_partial_artifacts_kept_on_failure(tmp_path):
    src = tmp_path / "empty.tsv"
    src.write_text("ts\tfrom\tto\tchannel\n")
    main(["run", str(src), "--out", str(tmp_path)])
    assert (tmp_path / "interevent.tsv").exists()
    assert load(tmp_path / "manifest.json")["artifacts"] == ["interevent.tsv", "manifest.json"]


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as err:
        main(["run", "--no-such-flag"])
    assert err.value.code == 2
    assert main(["run"]) == 2


def test_subcommand_chain(tmp_path):
    events, traits = fixture_paths()
    e = tmp_path / "extract"
    assert main(["extract", events, "--out", str(e), "--threshold-hours", "12"]) == 0
    assert (e / "initiatives.tsv").read_text().startswith("link_a\tlink_b\tactor\tts\tordinal\n")
    assert load(e / "manifest.json")["config"]["threshold_hours"] == 12.0
    m = tmp_path / "estimate"
    assert main(["estimate", "--counts", str(e / "link_counts.tsv"), "--out", str(m),
                 "--grid-size", "26", "--reciprocal-only", "--min-initiatives", "3"]) == 0
    assert len((m / "link_mixture.tsv").read_text().splitlines()) == 27
    assert load(m / "report.json")["link_mixture"]["reciprocal_only"]
    s = tmp_path / "simulate"
    assert main(["simulate", "--counts", str(e / "link_counts.tsv"), "--distribution",
                 str(m / "link_mixture.tsv"), "--replicas", "2", "--export-replicas", "--out", str(s)]) == 0
    assert (s / "replica_001.tsv").read_text().startswith("a\tb\tn_a\tn_b\n")
    assert load(s / "report.json")["bootstrap"]["link"]["replicas"] == 2
    d = tmp_path / "dynamics"
    assert main(["dynamics", events, "--out", str(d), "--min-initiatives", "20", "--ghost-factor", "5"]) == 0
    disc = load(d / "report.json")["dynamics"]["discontinuation"]
    assert disc["min_initiatives"] == 20 and disc["factor"] == 5.0
    p = tmp_path / "persons"
    assert main(["persons", events, "--traits", traits, "--out", str(p), "--window-size", "10",
                 "--disjoint-windows", "--min-person-initiatives", "100", "--bootstrap-rounds", "20"]) == 0
    per = load(p / "report.json")["persons"]
    assert per["window_size"] == 10 and per["stride"] == 10


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("INITIATIVE_OUT", str(tmp_path / "envout"))
    events, _ = fixture_paths()
    assert main(["ingest", events]) == 0
    assert (tmp_path / "envout" / "manifest.json").exists()


def test_help_lists_flags():
    parser = build_parser()
    run_help = parser._subparsers._group_actions[0].choices["run"].format_help()
    for flag in ("--threshold-hours", "--grid-size", "--tol", "--max-iter", "--min-initiatives",
                 "--reciprocal-only", "--normal-approx", "--replicas", "--seed", "--ghost-factor",
                 "--min-curve-obs", "--window-size", "--min-person-initiatives", "--bootstrap-rounds",
                 "--threads", "--skip-dynamics"):
        assert flag in run_help


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "initiative", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("initiative ")
