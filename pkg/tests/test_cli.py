import subprocess
import sys

import pytest

from wsnguard.cli import EXIT_CONFIG, EXIT_IO, EXIT_MISMATCH, EXIT_OK, main, parse_seeds


def test_run_fig4(tmp_path, capsys):
    assert main(["run", "fig4", "--out", str(tmp_path)]) == EXIT_OK
    trace = (tmp_path / "fig4-s4-on.trace").read_text()
    assert "reason=SLEEP_VIOLATION\tresidual=" in trace
    assert "phase2=DROP\tconfirmed=1" in trace and "ISOLATE\tJ\tnode=A" in trace
    assert "SINK\tJ\tpkt=36\torigin=C\ttag=VALID" in trace
    metrics = (tmp_path / "fig4-s4-on.metrics").read_text()
    assert "tp=1\n" in metrics
    csv = (tmp_path / "fig4-s4-on.csv").read_text().splitlines()
    assert len(csv) == 2 and csv[0].startswith("name,seed")
    assert "isolated=A" in capsys.readouterr().out


def test_run_verify(tmp_path, capsys):
    assert main(["run", "fig4", "--verify", "--out", str(tmp_path)]) == EXIT_OK
    assert "oracle: OK" in capsys.readouterr().out


def test_run_no_detection(tmp_path):
    assert main(["run", "fig4", "--no-detection", "--seed", "9", "--out", str(tmp_path)]) == EXIT_OK
    trace = (tmp_path / "fig4-s9-off.trace").read_text()
    assert "detection=0" in trace.splitlines()[0]
    assert "\tCLASSIFY\t" not in trace and "\tISOLATE\t" not in trace


def test_bad_config_errors_on_stderr(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("name: bad\nhorizon: 10\ntopology: {radius: 5, nodes: []}\nclasses: {}\ndetection: {window: 0}\n")
    code = main(["run", str(bad), "--out", str(tmp_path)])
    captured = capsys.readouterr()
    assert code == EXIT_CONFIG
    errors = [line for line in captured.err.splitlines() if line.startswith("error: ")]
    assert any("detection.window" in e for e in errors)
    assert captured.out == ""


def test_validate_prints_resolved_config():
    # a subprocess, so the CLI's own logging setup is what routes to stderr
    out = subprocess.run([sys.executable, "-m", "wsnguard", "validate", "fig4"], capture_output=True, text=True)
    assert out.returncode == EXIT_OK
    assert "rate_threshold: 10" in out.stdout
    assert "default applied: detection.rate_threshold=10" in out.stderr


def test_sweep_writes_csv_and_comparison(tmp_path, capsys):
    assert main(["sweep", "fig4", "--seeds", "0..2", "--workers", "1", "--out", str(tmp_path)]) == EXIT_OK
    rows = (tmp_path / "fig4-sweep.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 3
    assert {r.split(",")[1] for r in rows[1:]} == {"0", "1", "2"}
    assert (tmp_path / "fig4-compare.txt").read_text().count("violation=") == 3
    assert "3 pairs" in capsys.readouterr().out


def test_run_sweep_flag_in_parallel(tmp_path):
    code = main(["run", "fig4", "--sweep", "seeds=3..4", "--workers", "2", "--verify", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert sorted(p.name for p in tmp_path.glob("*.trace")) == [
        "fig4-s3-off.trace", "fig4-s3-on.trace", "fig4-s4-off.trace", "fig4-s4-on.trace",
    ]


def test_output_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("WSNGUARD_OUT", str(tmp_path / "env"))
    monkeypatch.chdir(tmp_path)
    assert main(["run", "fig4"]) == EXIT_OK
    assert (tmp_path / "env" / "fig4-s4-on.trace").exists()
    assert not (tmp_path / "out").exists()
    assert main(["run", "fig4", "--out", str(tmp_path / "flag")]) == EXIT_OK
    assert (tmp_path / "flag" / "fig4-s4-on.trace").exists()


def test_verify_detects_tampering(tmp_path, capsys):
    main(["run", "fig4", "--out", str(tmp_path)])
    path = tmp_path / "fig4-s4-on.trace"
    assert main(["verify", str(path)]) == EXIT_OK
    path.write_text(path.read_text().replace("tag=INVALID\treason=SLEEP_VIOLATION", "tag=VALID\treason=NONE"))
    capsys.readouterr()
    assert main(["verify", str(path)]) == EXIT_MISMATCH
    assert "phase1: 1 mismatch" in capsys.readouterr().out


def test_verify_scenario_directly(capsys):
    assert main(["verify", "quiet"]) == EXIT_OK
    assert capsys.readouterr().out.rstrip().endswith("OK")


def test_unwritable_output_is_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", "fig4", "--out", str(blocker / "sub")]) == EXIT_IO


def test_parse_seeds():
    assert parse_seeds("seeds=2..5") == range(2, 6)
    assert parse_seeds("7") == range(7, 8)
    with pytest.raises(Exception):
        parse_seeds("seeds=5..2")


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "wsnguard", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "validate" in out.stdout and "fig4" in out.stdout
