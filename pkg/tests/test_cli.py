import json
import subprocess
import sys

from upsched import io
from upsched.cli import main
from upsched.experiments import PRESETS


def test_replay_writes_summary_and_per_packet_files(tmp_path, capsys):
    rc = main(["replay", "--horizon", "1000000", "--candidates", "lstf,omniscient",
               "--per-packet", "--out", str(tmp_path), "--threads", "1"])
    assert rc == 0
    rows = io.read_jsonl(tmp_path / "summary.jsonl")
    assert [r["candidate"] for r in rows] == ["lstf", "omniscient"]
    assert (tmp_path / "record_hops.csv").exists()
    assert (tmp_path / "report_lstf.csv").exists()
    assert "frac_overdue" in capsys.readouterr().out


def test_sweep(tmp_path):
    rc = main(["sweep", "--horizon", "500000", "--utilizations", "0.2,0.5", "--candidates", "omniscient",
               "--out", str(tmp_path), "--threads", "1"])
    assert rc == 0
    assert len(io.read_jsonl(tmp_path / "summary.jsonl")) == 2


def test_objective_with_policy_override(tmp_path):
    rc = main(["objective", "--preset", "tail", "--horizon", "2000000", "--candidates", "fifo,lstf-uniform",
               "--policy", "C=5000", "--out", str(tmp_path), "--threads", "1"])
    assert rc == 0
    assert (tmp_path / "delay_percentiles.csv").exists()


def test_fixture_group_and_output(tmp_path, capsys):
    assert main(["fixture", "no_ups", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "no_ups_case1" in out and "no_ups_case2" in out
    assert len(io.read_jsonl(tmp_path / "fixtures.jsonl")) == 2


def test_unknown_fixture(capsys):
    assert main(["fixture", "nope"]) == 2
    assert "unknown fixture" in capsys.readouterr().err


def test_preset_prints_loadable_json(capsys):
    assert main(["preset", "fairness"]) == 0
    assert json.loads(capsys.readouterr().out) == json.loads(PRESETS["fairness"]().dumps())


def test_bad_scenario_file_is_an_error(tmp_path, capsys):
    bad = tmp_path / "s.json"
    bad.write_text('{"schema_version": 99}')
    assert main(["replay", "--scenario", str(bad), "--out", str(tmp_path)]) == 1
    assert "schema_version" in capsys.readouterr().err


def test_console_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "upsched.cli", "preset", "tail"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["name"] == "tail_chain"
