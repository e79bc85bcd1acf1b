"""Schedule recording, replay header initialization and replay metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .network import Network, Packet, transmission_ticks
from .schedulers import SchedulerKind
from .sim import Simulation

__all__ = [
    "PacketSpec", "PacketRecord", "ScheduleRecord", "CongestionProfile", "ReplayReport",
    "RecordError", "record", "congestion_counts", "init_lstf_headers", "init_priority_headers",
    "init_omniscient_headers", "replay", "metrics", "parse_candidate", "MTU_BITS",
]

MTU_BITS = 1500 * 8


class RecordError(RuntimeError):
    """The original run cannot serve as a replay target."""


@dataclass(frozen=True)
class PacketSpec:
    """Everything about a packet that is fixed across original and replay."""

    pkt_id: int
    flow_id: int
    size: int  # bits
    ingress_time: int
    path: tuple[int, ...]
    flow_size: int | None = None
    remaining: int | None = None
    hop_times: tuple[int, ...] | None = None  # only for scripted originals

    def build(self, network: Network) -> Packet:
        p = Packet(self.pkt_id, self.flow_id, self.size, self.ingress_time, self.path, network)
        p.flow_size = self.flow_size if self.flow_size is not None else self.size
        p.remaining = self.remaining if self.remaining is not None else p.flow_size
        if self.hop_times is not None:
            p.hop_times = self.hop_times
        return p


@dataclass(frozen=True)
class PacketRecord:
    pkt_id: int
    flow_id: int
    size: int
    path: tuple[int, ...]
    ingress: int
    output: int  # last bit leaves the egress
    arrivals: tuple[int, ...]
    sched: tuple[int, ...]  # first bit scheduled at each hop
    tx: tuple[int, ...]
    tmin_total: int

    @property
    def queueing(self) -> int:
        return self.output - self.ingress - self.tmin_total

    def waits(self) -> list[int]:
        return [s - a for a, s in zip(self.arrivals, self.sched)]


@dataclass
class ScheduleRecord:
    network: Network
    packets: dict[int, PacketRecord]
    specs: dict[int, PacketSpec]
    scheduler: str = ""

    def __len__(self):
        return len(self.packets)

    def threshold(self) -> int:
        """One MTU-sized transmission on the slowest link carrying traffic.

        The MTU is taken as the largest packet in the record.
        """
        mtu = max((r.size for r in self.packets.values()), default=MTU_BITS)
        best = 0
        slowest = None
        seen = set()
        for r in self.packets.values():
            for u, v in zip(r.path, r.path[1:]):
                if (u, v) in seen:
                    continue
                seen.add((u, v))
                bw = self.network.links[(u, v)].bandwidth
                if bw is not None and (slowest is None or bw < slowest):
                    slowest = bw
        if slowest is not None:
            best = transmission_ticks(mtu, slowest)
        return best


@dataclass
class CongestionProfile:
    nodes: dict[int, tuple[int, ...]]

    def count(self, pkt_id: int) -> int:
        return len(self.nodes[pkt_id])

    def max_count(self) -> int:
        return max((len(v) for v in self.nodes.values()), default=0)

    def histogram(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for v in self.nodes.values():
            out[len(v)] = out.get(len(v), 0) + 1
        return dict(sorted(out.items()))


@dataclass
class ReplayReport:
    candidate: str
    pkt_ids: np.ndarray
    original: np.ndarray
    replayed: np.ndarray
    orig_queueing: np.ndarray
    replay_queueing: np.ndarray
    threshold: int
    trace: list | None = field(default=None, repr=False)
    packets: dict[int, Packet] | None = field(default=None, repr=False)
    preemptions: int = 0

    @property
    def lateness(self) -> np.ndarray:
        return self.replayed - self.original

    @property
    def overdue(self) -> np.ndarray:
        return self.lateness > 0

    @property
    def n_overdue(self) -> int:
        return int(self.overdue.sum())

    @property
    def frac_overdue(self) -> float:
        return float(self.overdue.mean()) if len(self.original) else 0.0

    @property
    def frac_overdue_gt_T(self) -> float:
        return float((self.lateness > self.threshold).mean()) if len(self.original) else 0.0

    def queueing_ratio(self) -> np.ndarray:
        """Per-packet replay/original queueing; 0/0 is 1 and x/0 is +inf."""
        o = self.orig_queueing.astype(float)
        r = self.replay_queueing.astype(float)
        out = np.empty_like(o)
        zero = o == 0
        out[~zero] = r[~zero] / o[~zero]
        out[zero & (r <= 0)] = 1.0
        out[zero & (r > 0)] = np.inf
        return out

    def overdue_ids(self) -> list[int]:
        return [int(i) for i in self.pkt_ids[self.overdue]]

    def summary(self) -> dict:
        return {
            "candidate": self.candidate,
            "packets": int(len(self.original)),
            "overdue": self.n_overdue,
            "frac_overdue": round(self.frac_overdue, 6),
            "frac_overdue_gt_T": round(self.frac_overdue_gt_T, 6),
            "T": int(self.threshold),
            "median_queueing_ratio": _finite(float(np.median(self.queueing_ratio())))
            if len(self.original) else None,
        }


def _finite(x: float):
    return x if math.isfinite(x) else "inf"


# -- recording ------------------------------------------------------------

def _run(network: Network, specs: Sequence[PacketSpec], scheduler, *, seed=0, trace=False,
         probe=None, headers=None) -> tuple[Simulation, list[Packet]]:
    sim = Simulation(network, scheduler, seed=seed, trace=trace, probe=probe)
    pkts = []
    for spec in specs:
        p = spec.build(network)
        if headers is not None:
            headers(p)
        pkts.append(p)
    sim.inject_all(pkts)
    sim.run()
    return sim, pkts


def _to_record(p: Packet) -> PacketRecord:
    return PacketRecord(p.pkt_id, p.flow_id, p.size, p.path, p.ingress_time, p.exit_time,
                        tuple(p.arrivals), tuple(p.starts), p.tx, p.tmin_suffix[0])


def record(network: Network, specs: Sequence[PacketSpec], scheduler: SchedulerKind | str,
           *, seed: int = 0, trace: bool = False, headers=None) -> ScheduleRecord:
    """Run the original schedulers and capture i(p), o(p) and per-hop times.

    ``headers`` optionally stamps each packet before injection, e.g. to record
    a schedule produced by LSTF under some slack assignment.
    """
    for link in network.links.values():
        if link.buffer_limit is not None:
            raise RecordError("recording requires unbounded buffers")
    sim, pkts = _run(network, specs, scheduler, seed=seed, trace=trace, headers=headers)
    if sim.dropped or any(p.exit_time is None for p in pkts):
        raise RecordError("a packet was dropped or never exited")
    rec = ScheduleRecord(network, {p.pkt_id: _to_record(p) for p in pkts},
                         {s.pkt_id: s for s in specs}, str(scheduler))
    return rec


def congestion_counts(rec: ScheduleRecord) -> CongestionProfile:
    return CongestionProfile({
        pid: tuple(node for node, a, s in zip(r.path, r.arrivals, r.sched) if s - a > 0)
        for pid, r in rec.packets.items()
    })


# -- header initialization ------------------------------------------------

def init_lstf_headers(rec: ScheduleRecord) -> dict[int, int]:
    out = {}
    for pid, r in rec.packets.items():
        slack = r.output - r.ingress - r.tmin_total
        if slack < 0:
            raise RecordError(f"packet {pid} has negative slack {slack}; record/topology mismatch")
        out[pid] = slack
    return out


def init_priority_headers(rec: ScheduleRecord, mode: str = "output_time") -> dict[int, int]:
    """Static priorities: ``o(p)``, or the single-congestion-point local deadline."""
    if mode == "output_time":
        return {pid: r.output for pid, r in rec.packets.items()}
    if mode != "single_cp":
        raise ValueError(f"unknown priority mode {mode!r}")
    prof = congestion_counts(rec)
    out = {}
    for pid, r in rec.packets.items():
        cps = prof.nodes[pid]
        if len(cps) > 1:
            raise RecordError(f"packet {pid} has {len(cps)} congestion points; single_cp needs <= 1")
        if cps:
            h = r.path.index(cps[0])
        else:
            h = 0
        tmin_from = sum(r.tx[h:]) + sum(rec.network.links[(u, v)].prop_delay
                                        for u, v in zip(r.path[h:], r.path[h + 1:]))
        out[pid] = r.output - tmin_from + r.tx[h]
    return out


def init_omniscient_headers(rec: ScheduleRecord) -> dict[int, tuple[int, ...]]:
    return {pid: tuple(r.sched) for pid, r in rec.packets.items()}


# -- replay ---------------------------------------------------------------

_PRIORITY_ALIASES = {
    "priority": "output_time", "priority_o": "output_time", "priority-o": "output_time",
    "priority_cp": "single_cp", "priority-cp": "single_cp", "priority_single_cp": "single_cp",
}


def parse_candidate(tag: str) -> tuple[SchedulerKind, str | None]:
    """Map a candidate tag to a scheduler kind and optional priority mode.

    ``priority_o`` and ``priority_cp`` select the priority header mode; any
    tag can take a ``:preemptive`` suffix where the discipline allows it.
    """
    tag = tag.strip().lower()
    base, _, suffix = tag.partition(":")
    mode = _PRIORITY_ALIASES.get(base)
    if mode is not None:
        return SchedulerKind.parse("priority" + (":" + suffix if suffix else "")), mode
    return SchedulerKind.parse(tag), None


def replay(rec: ScheduleRecord, candidate: SchedulerKind | str, *, priority_mode: str | None = None,
           seed: int = 0, trace: bool = False, probe: list | None = None,
           keep_packets: bool = False, priorities: dict[int, int] | None = None) -> ReplayReport:
    """Re-inject the recorded packets under ``candidate`` and compare exit times.

    ``priorities`` supplies explicit static priorities for a priority
    candidate instead of deriving them from the record.
    """
    label = str(candidate)
    if isinstance(candidate, str):
        candidate, mode = parse_candidate(candidate)
        priority_mode = priority_mode or mode
    name = candidate.name
    setter = None
    if name == "lstf":
        slacks = init_lstf_headers(rec)

        def setter(p):
            p.slack = slacks[p.pkt_id]
    elif name == "edf":
        def setter(p):
            p.deadline = rec.packets[p.pkt_id].output
    elif name == "priority":
        prios = priorities if priorities is not None else init_priority_headers(rec, priority_mode or "output_time")

        def setter(p):
            p.priority = prios[p.pkt_id]
    elif name == "omniscient":
        hops = init_omniscient_headers(rec)

        def setter(p):
            p.hop_times = hops[p.pkt_id]
    specs = [rec.specs[pid] for pid in rec.packets]
    sim, pkts = _run(rec.network, specs, candidate, seed=seed, trace=trace, probe=probe,
                     headers=setter)
    ids = np.array([p.pkt_id for p in pkts], dtype=np.int64)
    orig = np.array([rec.packets[p.pkt_id].output for p in pkts], dtype=np.int64)
    new = np.array([p.exit_time for p in pkts], dtype=np.int64)
    ing = np.array([p.ingress_time for p in pkts], dtype=np.int64)
    tmin = np.array([p.tmin_suffix[0] for p in pkts], dtype=np.int64)
    return ReplayReport(label, ids, orig, new, orig - ing - tmin, new - ing - tmin,
                        rec.threshold(), sim.trace, {p.pkt_id: p for p in pkts} if keep_packets else None,
                        sim.preemptions)


def metrics(report: ReplayReport, bins: int = 10) -> dict:
    """Overdue fractions, lateness histogram (in units of T) and queueing-ratio CDF."""
    late = report.lateness
    T = max(report.threshold, 1)
    pos = late[late > 0]
    edges = np.arange(bins + 1, dtype=float)
    hist, _ = np.histogram(np.minimum(pos / T, bins - 1e-9), bins=edges) if len(pos) else (np.zeros(bins, int), None)
    ratio = report.queueing_ratio()
    finite = np.sort(ratio[np.isfinite(ratio)])
    n = len(ratio)
    cdf = []
    if n:
        vals, idx = np.unique(finite, return_index=False, return_counts=True)
        cum = np.cumsum(idx) / n
        cdf = [(float(v), float(c)) for v, c in zip(vals, cum)]
    return {
        "frac_overdue": report.frac_overdue,
        "frac_overdue_gt_T": report.frac_overdue_gt_T,
        "on_time": int((late <= 0).sum()),
        "lateness_hist_T": [int(x) for x in hist],
        "ratio_cdf": cdf,
        "frac_ratio_inf": float(np.isinf(ratio).mean()) if n else 0.0,
    }
