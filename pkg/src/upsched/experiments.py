"""Scenario files and the replay / objective / sweep drivers behind the CLI."""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import policies
from .network import Network
from .replay import ReplayReport, ScheduleRecord, congestion_counts, record, replay
from .transport import Aimd, FlowSpec, TransportResult, TransportRun
from .workload import (GBPS, MS, US, BoundedPareto, FixedSize, TopologySpec, TrafficSpec, build,
                       gen_traffic, packetize)

__all__ = [
    "SCHEMA_VERSION", "ScenarioConfig", "ReplayRun", "run_replay", "run_sweep", "run_objective",
    "thread_cap", "parallel_map", "ObjectiveRun", "PRESETS",
]

SCHEMA_VERSION = 1


def thread_cap(requested: int | None = None) -> int:
    env = os.environ.get("UPSCHED_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    n = requested if requested is not None else cap
    return max(1, min(n, cap))


def parallel_map(fn: Callable, items: Sequence, threads: int | None = None) -> list:
    """Map in worker processes; results come back in input order."""
    n = thread_cap(threads)
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(n, len(items))) as ex:
        return list(ex.map(fn, items))


# -- scenario files -------------------------------------------------------

def _dist_to_dict(d) -> dict:
    if isinstance(d, BoundedPareto):
        return {"kind": "bounded_pareto", "shape": d.shape, "min": d.min, "max": d.max}
    return {"kind": "fixed", "size": d.size}


def _dist_from_dict(d: dict):
    kind = d.get("kind", "bounded_pareto")
    if kind == "bounded_pareto":
        return BoundedPareto(float(d.get("shape", 1.2)), int(d.get("min", 1500)), int(d.get("max", 15_000_000)))
    if kind == "fixed":
        return FixedSize(int(d["size"]))
    raise ValueError(f"unknown size distribution {kind!r}")


@dataclass
class ScenarioConfig:
    """Everything that determines a run; round-trips through JSON."""

    name: str = "scenario"
    mode: str = "replay"  # replay | objective
    topology: TopologySpec = field(default_factory=TopologySpec)
    traffic: TrafficSpec = field(default_factory=TrafficSpec)
    original: str = "random"
    candidates: list[str] = field(default_factory=lambda: ["lstf", "priority_o", "omniscient"])
    objective: str | None = None  # fct | tail | fairness
    schedulers: list[str] = field(default_factory=list)
    policy: dict = field(default_factory=dict)
    buffer_bytes: int | None = None
    seed: int = 0
    horizon: int | None = None  # simulation end; None runs to completion
    per_packet_csv: bool = False
    utilizations: list[float] = field(default_factory=list)  # sweep only
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        t = self.traffic
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "mode": self.mode,
            "topology": self.topology.to_dict(),
            "traffic": {
                "target_utilization": t.target_utilization,
                "size_dist": _dist_to_dict(t.size_dist),
                "horizon": t.horizon,
                "transport": t.transport,
                "mss": t.mss,
                "init_window": t.init_window,
                "pairs": None if t.pairs is None else [list(p) for p in t.pairs],
            },
            "original": self.original,
            "candidates": list(self.candidates),
            "objective": self.objective,
            "schedulers": list(self.schedulers),
            "policy": dict(self.policy),
            "buffer_bytes": self.buffer_bytes,
            "seed": self.seed,
            "horizon": self.horizon,
            "per_packet_csv": self.per_packet_csv,
            "utilizations": list(self.utilizations),
            "extra": dict(self.extra),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        ver = d.get("schema_version")
        if ver != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {ver!r} (expected {SCHEMA_VERSION})")
        t = d.get("traffic", {})
        pairs = t.get("pairs")
        traffic = TrafficSpec(
            target_utilization=float(t.get("target_utilization", 0.7)),
            size_dist=_dist_from_dict(t.get("size_dist", {})),
            seed=int(d.get("seed", 0)),
            horizon=int(t.get("horizon", 10 * MS)),
            transport=t.get("transport", "open_loop"),
            mss=int(t.get("mss", 1500)),
            init_window=float(t.get("init_window", 1.0)),
            pairs=None if pairs is None else tuple(tuple(p) for p in pairs),
        )
        topo = d.get("topology", {})
        return cls(
            name=d.get("name", "scenario"),
            mode=d.get("mode", "replay"),
            topology=TopologySpec(topo.get("builder", "star_of_stars"), dict(topo.get("params", {}))),
            traffic=traffic,
            original=d.get("original", "random"),
            candidates=list(d.get("candidates", ["lstf", "priority_o", "omniscient"])),
            objective=d.get("objective"),
            schedulers=list(d.get("schedulers", [])),
            policy=dict(d.get("policy", {})),
            buffer_bytes=d.get("buffer_bytes"),
            seed=int(d.get("seed", 0)),
            horizon=d.get("horizon"),
            per_packet_csv=bool(d.get("per_packet_csv", False)),
            utilizations=[float(u) for u in d.get("utilizations", [])],
            extra=dict(d.get("extra", {})),
        )

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed, traffic=replace(self.traffic, seed=seed))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps() + "\n")


# -- replay ---------------------------------------------------------------

@dataclass
class ReplayRun:
    config: ScenarioConfig
    record: ScheduleRecord
    reports: list[ReplayReport]
    rows: list[dict]


def _build_record(cfg: ScenarioConfig) -> ScheduleRecord:
    net = build(cfg.topology)
    flows = gen_traffic(net, replace(cfg.traffic, seed=cfg.seed))
    specs = packetize(net, flows)
    return record(net, specs, cfg.original, seed=cfg.seed)


def _replay_cell(args) -> ReplayReport:
    rec, cand, seed = args
    return replay(rec, cand, seed=seed)


def run_replay(cfg: ScenarioConfig, candidates: Sequence[str] | None = None,
               threads: int | None = None) -> ReplayRun:
    """Record the original schedule, then replay it under each candidate."""
    rec = _build_record(cfg)
    cands = list(candidates or cfg.candidates)
    reports = parallel_map(_replay_cell, [(rec, c, cfg.seed) for c in cands], threads)
    prof = congestion_counts(rec)
    util = _bottleneck_util(rec, cfg.traffic.horizon)
    rows = []
    for c, rep in zip(cands, reports):
        row = {"scenario": cfg.name, "original": cfg.original, "candidate": c, "seed": cfg.seed,
               "target_utilization": cfg.traffic.target_utilization,
               "measured_utilization": round(util, 6),
               "max_congestion_points": prof.max_count()}
        row.update(rep.summary())
        row["candidate"] = c
        rows.append(row)
    return ReplayRun(cfg, rec, reports, rows)


def _bottleneck_util(rec: ScheduleRecord, horizon: int) -> float:
    """Busy fraction of the most loaded finite-rate link within ``[0, horizon)``."""
    busy: dict[tuple[int, int], int] = {}
    for r in rec.packets.values():
        for h, (u, v) in enumerate(zip(r.path, r.path[1:])):
            start = r.sched[h]
            if r.tx[h] and start < horizon:
                busy[(u, v)] = busy.get((u, v), 0) + min(r.tx[h], horizon - start)
    return max(busy.values(), default=0) / horizon


def run_sweep(cfg: ScenarioConfig, utilizations: Sequence[float] | None = None,
              candidates: Sequence[str] | None = None, threads: int | None = None) -> list[dict]:
    utils = list(utilizations or cfg.utilizations or [0.1, 0.3, 0.5, 0.7, 0.9])
    cells = [replace(cfg, traffic=replace(cfg.traffic, target_utilization=u)) for u in utils]
    runs = parallel_map(_sweep_cell, [(c, candidates) for c in cells], threads)
    return [row for rows in runs for row in rows]


def _sweep_cell(args) -> list[dict]:
    cfg, cands = args
    return run_replay(cfg, cands, threads=1).rows


# -- objectives -----------------------------------------------------------

@dataclass
class ObjectiveRun:
    config: ScenarioConfig
    rows: list[dict]                      # one summary per scheduler/policy cell
    tables: dict[str, list[dict]]         # named CSV tables
    results: dict[str, TransportResult] = field(default_factory=dict, repr=False)


def _stamp_for(tag: str, policy: dict, r_star: float | None = None):
    """Split ``lstf-fct`` style tags into a scheduler tag and a header stamp."""
    base, _, pol = tag.partition("-")
    if base != "lstf" or not pol:
        return tag, None
    if pol == "fct":
        return "lstf", policies.FctStamp(int(policy.get("D", policies.ONE_SECOND)))
    if pol == "uniform":
        return "lstf", policies.UniformStamp(int(policy.get("C", policies.ONE_SECOND)))
    if pol.startswith("fair"):
        div = float(pol[len("fair"):] or 1)
        r_est = float(policy.get("r_est", r_star)) / div
        return "lstf", policies.FairStamp(policies.FairPolicy(r_est, {int(k): float(v) for k, v in policy.get("overrides", {}).items()}))
    raise ValueError(f"unknown slack policy {pol!r}")


def _transport_cell(args) -> tuple[str, TransportResult]:
    net_spec, flows, tag, policy, seed, horizon, buffer_bytes, r_star = args
    net = build(net_spec)
    if buffer_bytes is not None:
        net.set_buffers(buffer_bytes)
    sched, stamp = _stamp_for(tag, policy, r_star)
    run = TransportRun(net, sched, flows, seed=seed, stamp=stamp)
    return tag, run.run(horizon)


def _flows_for(cfg: ScenarioConfig, net: Network) -> list[FlowSpec]:
    if cfg.objective == "fairness":
        n = int(cfg.extra.get("flows", 12))
        jitter = int(cfg.extra.get("start_jitter", 1 * MS))
        rng = np.random.default_rng([cfg.seed, 13])
        starts = rng.integers(0, jitter + 1, size=n)
        mss = cfg.traffic.mss
        srcs = [net.node(f"src{i}") for i in range(n)]
        dsts = [net.node(f"dst{i}") for i in range(n)]
        return [FlowSpec(i, srcs[i], dsts[i], None, int(starts[i]), Aimd(cfg.traffic.init_window, mss))
                for i in range(n)]
    flows = gen_traffic(net, replace(cfg.traffic, seed=cfg.seed))
    if cfg.objective == "tail":
        # every packet MTU-sized so that uniform-slack LSTF and FIFO+ order identically
        mss = cfg.traffic.mss
        flows = [replace(f, size=-(-f.size // mss) * mss) for f in flows]
    return flows


def run_objective(cfg: ScenarioConfig, schedulers: Sequence[str] | None = None,
                  threads: int | None = None) -> ObjectiveRun:
    net = build(cfg.topology)
    flows = _flows_for(cfg, net)
    tags = list(schedulers or cfg.schedulers)
    r_star = None
    if cfg.objective == "fairness":
        bottleneck = net.links[(net.node("left"), net.node("right"))].bandwidth
        r_star = bottleneck / len(flows)
    cells = [(cfg.topology, flows, t, cfg.policy, cfg.seed, cfg.horizon, cfg.buffer_bytes, r_star)
             for t in tags]
    results = dict(parallel_map(_transport_cell, cells, threads))
    if cfg.objective == "fct":
        rows, tables = _fct_summary(cfg, flows, tags, results)
    elif cfg.objective == "tail":
        rows, tables = _tail_summary(cfg, tags, results)
    elif cfg.objective == "fairness":
        rows, tables = _fair_summary(cfg, flows, tags, results)
    else:
        raise ValueError(f"unknown objective {cfg.objective!r}")
    return ObjectiveRun(cfg, rows, tables, results)


def _fct_summary(cfg, flows, tags, results):
    sizes = [f.size for f in flows]
    rows, bucket_rows = [], []
    for tag in tags:
        res = results[tag]
        fcts = [res.fct[f.flow_id] for f in flows]
        done = [x for x in fcts if x is not None]
        rows.append({"scenario": cfg.name, "objective": "fct", "scheduler": tag, "seed": cfg.seed,
                     "flows": len(flows), "completed": len(done),
                     "mean_fct": float(np.mean(done)) if done else None,
                     "sent": res.sent, "dropped": res.dropped, "acked": res.acked})
        for b in policies.fct_buckets(sizes, fcts):
            bucket_rows.append({"scheduler": tag, **b})
    return rows, {"fct_buckets": bucket_rows}


def _tail_summary(cfg, tags, results):
    rows = []
    for tag in tags:
        res = results[tag]
        mean, p99 = policies.delay_percentiles(res.delays())
        rows.append({"scenario": cfg.name, "objective": "tail", "scheduler": tag, "seed": cfg.seed,
                     "packets": int(len(res.delivered)), "mean_delay": mean, "p99_delay": p99})
    return rows, {"delay_percentiles": [{k: r[k] for k in ("scheduler", "mean_delay", "p99_delay")}
                                        for r in rows]}


def _fair_summary(cfg, flows, tags, results):
    window = int(cfg.extra.get("window", 1 * MS))
    horizon = cfg.horizon
    ids = [f.flow_id for f in flows]
    rows, series_rows = [], []
    for tag in tags:
        res = results[tag]
        series = policies.jain_series(res.delivered, ids, window, horizon)
        rows.append({"scenario": cfg.name, "objective": "fairness", "scheduler": tag, "seed": cfg.seed,
                     "final_index": series[-1],
                     "time_to_0.95": policies.time_to_index(series, window, 0.95),
                     "time_to_0.99": policies.time_to_index(series, window, 0.99),
                     "dropped": res.dropped})
        for w, v in enumerate(series):
            series_rows.append({"scheduler": tag, "window_start": w * window, "jain": v})
    return rows, {"jain_series": series_rows}


# -- presets used by the CLI and the acceptance suite ---------------------

def _backbone(util: float = 0.7, horizon: int = 100 * MS, original: str = "random",
               candidates=("lstf", "priority_o", "omniscient")) -> ScenarioConfig:
    return ScenarioConfig(
        name=f"backbone_{original}_{int(round(util * 100))}",
        topology=TopologySpec("star_of_stars", {}),
        traffic=TrafficSpec(util, BoundedPareto(1.2, 1500, 1_500_000), 0, horizon),
        original=original, candidates=list(candidates),
    )


def _fct_preset() -> ScenarioConfig:
    return ScenarioConfig(
        name="fct_dumbbell", mode="objective", objective="fct",
        topology=TopologySpec("dumbbell", {"n": 8, "host_bw": 10 * GBPS, "core_bw": GBPS,
                                           "host_prop": 2 * US, "core_prop": 10 * US}),
        traffic=TrafficSpec(0.7, BoundedPareto(1.2, 1500, 1_500_000), 0, 200 * MS, transport="aimd",
                            init_window=10.0,
                            pairs=tuple((i + 2, i + 10) for i in range(8))),
        schedulers=["fifo", "sjf", "srpt", "lstf-fct"], buffer_bytes=100_000,
    )


def _tail_preset() -> ScenarioConfig:
    # chain h0..h5: one 5-hop flow class and 2-hop flows along the line
    pairs = [(6, 11)] + [(6 + i, 8 + i) for i in range(4)]
    return ScenarioConfig(
        name="tail_chain", mode="objective", objective="tail",
        topology=TopologySpec("chain", {"n_routers": 6, "link_bw": GBPS, "host_bw": 10 * GBPS,
                                        "prop": 1 * US}),
        traffic=TrafficSpec(0.7, BoundedPareto(1.2, 1500, 150_000), 0, 100 * MS, pairs=tuple(pairs)),
        schedulers=["fifo", "lstf-uniform", "fifo+"],
    )


def _fair_preset() -> ScenarioConfig:
    return ScenarioConfig(
        name="fair_dumbbell", mode="objective", objective="fairness",
        topology=TopologySpec("dumbbell", {"n": 12, "host_bw": 10 * GBPS, "core_bw": 10 * GBPS,
                                           "host_prop": 1 * US, "core_prop": 5 * US}),
        traffic=TrafficSpec(0.5, FixedSize(1500), 0, 1 * MS, transport="aimd"),
        schedulers=["fq", "lstf-fair", "lstf-fair10", "lstf-fair100", "fifo"],
        buffer_bytes=1_000_000, horizon=20 * MS,
        extra={"flows": 12, "start_jitter": 1 * MS, "window": 1 * MS},
    )


PRESETS: dict[str, Callable[[], ScenarioConfig]] = {
    "backbone": _backbone,
    "backbone_sjf": lambda: _backbone(original="sjf", candidates=("lstf", "lstf:preemptive")),
    "backbone_lifo": lambda: _backbone(original="lifo", candidates=("lstf", "lstf:preemptive")),
    "fct": _fct_preset,
    "tail": _tail_preset,
    "fairness": _fair_preset,
}
