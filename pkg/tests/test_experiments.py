import json
from dataclasses import replace

import pytest

from upsched.experiments import (PRESETS, SCHEMA_VERSION, ScenarioConfig, parallel_map, run_objective,
                                 run_replay, run_sweep, thread_cap)
from upsched.workload import MS


def square(x):
    return x * x


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_round_trip_through_json(name, tmp_path):
    cfg = PRESETS[name]()
    cfg.save(tmp_path / "s.json")
    back = ScenarioConfig.load(tmp_path / "s.json")
    assert back.dumps() == cfg.dumps()


def test_schema_version_is_checked():
    d = ScenarioConfig().to_dict()
    d["schema_version"] = SCHEMA_VERSION + 1
    with pytest.raises(ValueError):
        ScenarioConfig.from_dict(d)


def test_unknown_size_distribution_is_rejected():
    d = ScenarioConfig().to_dict()
    d["traffic"]["size_dist"] = {"kind": "lognormal"}
    with pytest.raises(ValueError):
        ScenarioConfig.from_dict(d)


def test_with_seed_updates_traffic_seed():
    cfg = ScenarioConfig().with_seed(9)
    assert cfg.seed == 9 and cfg.traffic.seed == 9


def test_thread_cap_and_ordered_parallel_map(monkeypatch):
    monkeypatch.setenv("UPSCHED_THREADS", "2")
    assert thread_cap(8) == 2 and thread_cap(None) == 2 and thread_cap(0) == 1
    assert parallel_map(square, list(range(6)), threads=2) == [x * x for x in range(6)]


def short_i2(ms=2):
    cfg = PRESETS["backbone"]()
    return replace(cfg, traffic=replace(cfg.traffic, horizon=ms * MS))


def test_run_replay_rows():
    run = run_replay(short_i2(), ["lstf", "omniscient"], threads=1)
    assert [r["candidate"] for r in run.rows] == ["lstf", "omniscient"]
    row = run.rows[1]
    assert row["overdue"] == 0 and row["packets"] == len(run.record)
    assert 0 < row["measured_utilization"] <= 1


def test_run_sweep_covers_each_level():
    rows = run_sweep(short_i2(1), [0.2, 0.4], ["omniscient"], threads=1)
    assert [r["target_utilization"] for r in rows] == [0.2, 0.4]


def test_run_objective_small_fct():
    cfg = PRESETS["fct"]()
    cfg = replace(cfg, traffic=replace(cfg.traffic, horizon=5 * MS))
    run = run_objective(cfg, ["fifo", "lstf-fct"], threads=1)
    assert {r["scheduler"] for r in run.rows} == {"fifo", "lstf-fct"}
    assert run.tables["fct_buckets"]
    json.dumps(run.rows)


def test_unknown_objective_and_policy():
    cfg = replace(PRESETS["fct"](), objective="latency")
    cfg = replace(cfg, traffic=replace(cfg.traffic, horizon=1 * MS))
    with pytest.raises(ValueError):
        run_objective(cfg, ["fifo"], threads=1)
    cfg = replace(PRESETS["fct"](), traffic=replace(PRESETS["fct"]().traffic, horizon=1 * MS))
    with pytest.raises(ValueError):
        run_objective(cfg, ["lstf-weird"], threads=1)
