"""Topology builders, traffic generation and random replay instances."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .network import Network, TICKS_PER_SECOND
from .replay import PacketSpec, ScheduleRecord, congestion_counts, record
from .schedulers import SchedulerKind
from .transport import Aimd, FlowSpec, OpenLoop

__all__ = [
    "BoundedPareto", "FixedSize", "TopologySpec", "TrafficSpec", "Instance",
    "star_of_stars", "fat_tree", "dumbbell", "chain", "build", "link_coefficients",
    "flow_rate_for", "gen_traffic", "packetize", "offered_load", "gen_random_instance",
    "gen_bounded_cp_instance", "GeneratorExhausted",
]

GBPS = 1_000_000_000
US = 1_000
MS = 1_000_000


@dataclass(frozen=True)
class BoundedPareto:
    shape: float = 1.2
    min: int = 1500
    max: int = 15_000_000

    def mean(self) -> float:
        a, lo, hi = self.shape, self.min, self.max
        norm = a * lo ** a / (1 - (lo / hi) ** a)
        if a == 1:
            return norm * math.log(hi / lo)
        return norm * (hi ** (1 - a) - lo ** (1 - a)) / (1 - a)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        a, lo, hi = self.shape, self.min, self.max
        u = rng.random(n)
        x = lo / (1 - u * (1 - (lo / hi) ** a)) ** (1 / a)
        return np.clip(np.ceil(x), lo, hi).astype(np.int64)


@dataclass(frozen=True)
class FixedSize:
    size: int = 1500

    def mean(self) -> float:
        return float(self.size)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.full(n, self.size, dtype=np.int64)


# -- topologies -----------------------------------------------------------

def star_of_stars(core_nodes: int = 4, edges_per_core: int = 3, core_bw: int = GBPS,
                  edge_bw: int = GBPS, host_bw: int = 10 * GBPS, core_prop: int = 2 * MS,
                  edge_prop: int = 10 * US, host_prop: int = 10 * US) -> Network:
    """Ring of core routers, each with edge routers that carry one host apiece."""
    net = Network()
    cores = [net.add_node(f"core{c}") for c in range(core_nodes)]
    if core_nodes == 2:
        net.add_duplex(cores[0], cores[1], core_bw, core_prop)
    elif core_nodes > 2:
        for c in range(core_nodes):
            net.add_duplex(cores[c], cores[(c + 1) % core_nodes], core_bw, core_prop)
    for c in range(core_nodes):
        for e in range(edges_per_core):
            edge = net.add_node(f"edge{c}.{e}")
            host = net.add_node(f"host{c}.{e}")
            net.add_duplex(cores[c], edge, edge_bw, edge_prop)
            net.add_duplex(edge, host, host_bw, host_prop)
            net.hosts.append(host)
    return net


def fat_tree(k: int = 4, link_bw: int = 10 * GBPS, prop: int = 1 * US) -> Network:
    if k % 2:
        raise ValueError("fat-tree arity must be even")
    half = k // 2
    net = Network()
    core = [net.add_node(f"core{i}") for i in range(half * half)]
    for pod in range(k):
        aggs = [net.add_node(f"agg{pod}.{i}") for i in range(half)]
        edges = [net.add_node(f"edge{pod}.{i}") for i in range(half)]
        for i, agg in enumerate(aggs):
            for j in range(half):
                net.add_duplex(agg, core[i * half + j], link_bw, prop)
            for edge in edges:
                net.add_duplex(agg, edge, link_bw, prop)
        for i, edge in enumerate(edges):
            for h in range(half):
                host = net.add_node(f"host{pod}.{i}.{h}")
                net.add_duplex(edge, host, link_bw, prop)
                net.hosts.append(host)
    return net


def dumbbell(n: int = 2, host_bw: int = 10 * GBPS, core_bw: int = 10 * GBPS,
             host_prop: int = 1 * US, core_prop: int = 5 * US) -> Network:
    """``n`` senders on the left, ``n`` receivers on the right, one shared link."""
    net = Network()
    left = net.add_node("left")
    right = net.add_node("right")
    net.add_duplex(left, right, core_bw, core_prop)
    for i in range(n):
        s = net.add_node(f"src{i}")
        net.add_duplex(s, left, host_bw, host_prop)
        net.hosts.append(s)
    for i in range(n):
        d = net.add_node(f"dst{i}")
        net.add_duplex(right, d, host_bw, host_prop)
        net.hosts.append(d)
    return net


def chain(n_routers: int, link_bw: int | Sequence[int] = GBPS, host_bw: int | Sequence[int] = 10 * GBPS,
          prop: int | Sequence[int] = 0, host_prop: int = 0) -> Network:
    """Routers ``r0..r{n-1}`` in a line, each with one attached host ``h{i}``."""
    net = Network()
    routers = [net.add_node(f"r{i}") for i in range(n_routers)]
    hosts = [net.add_node(f"h{i}") for i in range(n_routers)]
    for i in range(n_routers - 1):
        bw = link_bw[i] if isinstance(link_bw, Sequence) else link_bw
        pd = prop[i] if isinstance(prop, Sequence) else prop
        net.add_duplex(routers[i], routers[i + 1], bw, pd)
    for i in range(n_routers):
        bw = host_bw[i] if isinstance(host_bw, Sequence) else host_bw
        net.add_duplex(hosts[i], routers[i], bw, host_prop)
    net.hosts.extend(hosts)
    return net


_BUILDERS = {
    "star_of_stars": star_of_stars,
    "fat_tree": fat_tree,
    "dumbbell": dumbbell,
    "chain": chain,
}


@dataclass(frozen=True)
class TopologySpec:
    builder: str = "star_of_stars"
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"builder": self.builder, "params": dict(self.params)}


def build(spec: TopologySpec) -> Network:
    from .fixtures import FIXTURES
    if spec.builder in FIXTURES:
        return FIXTURES[spec.builder]().network
    try:
        fn = _BUILDERS[spec.builder]
    except KeyError:
        raise ValueError(f"unknown topology builder {spec.builder!r}") from None
    return fn(**spec.params)


# -- traffic --------------------------------------------------------------

@dataclass(frozen=True)
class TrafficSpec:
    target_utilization: float = 0.7
    size_dist: BoundedPareto | FixedSize = BoundedPareto()
    seed: int = 0
    horizon: int = 10 * MS  # flow arrivals are drawn in [0, horizon)
    transport: str = "open_loop"  # or "aimd"
    mss: int = 1500
    init_window: float = 1.0
    pairs: tuple | None = None  # restrict to these (src, dst) host pairs

    def __post_init__(self):
        if not 0 < self.target_utilization < 1:
            raise ValueError("target utilization must be in (0, 1)")


def _pairs(net: Network, spec: TrafficSpec) -> list[tuple[int, int]]:
    if spec.pairs is not None:
        return [tuple(p) for p in spec.pairs]
    return [(s, d) for s in net.hosts for d in net.hosts if s != d]


def link_coefficients(net: Network, pairs: Sequence[tuple[int, int]]) -> dict:
    """Expected fraction of one unit of per-source traffic crossing each link."""
    fanout: dict[int, int] = {}
    for s, _ in pairs:
        fanout[s] = fanout.get(s, 0) + 1
    coef: dict[tuple[int, int], float] = {}
    for s, d in pairs:
        path = net.route(s, d)
        for link in zip(path, path[1:]):
            coef[link] = coef.get(link, 0.0) + 1.0 / fanout[s]
    return coef


def flow_rate_for(net: Network, spec: TrafficSpec) -> tuple[float, tuple[int, int]]:
    """Per-source Poisson flow rate (flows/s) hitting the target on the bottleneck."""
    coef = link_coefficients(net, _pairs(net, spec))
    bits = spec.size_dist.mean() * 8
    best = None
    for link, c in coef.items():
        bw = net.links[link].bandwidth
        if bw is None:
            continue
        lam = spec.target_utilization * bw / (bits * c)
        if best is None or lam < best[0]:
            best = (lam, link)
    return best


def gen_traffic(net: Network, spec: TrafficSpec) -> list[FlowSpec]:
    """Poisson flow arrivals per source host, destinations uniform over its pairs."""
    rng = np.random.default_rng(spec.seed)
    pairs = _pairs(net, spec)
    lam, _ = flow_rate_for(net, spec)
    by_src: dict[int, list[int]] = {}
    for s, d in pairs:
        by_src.setdefault(s, []).append(d)
    horizon_s = spec.horizon / TICKS_PER_SECOND
    raw = []
    for s in sorted(by_src):
        n = rng.poisson(lam * horizon_s)
        starts = np.sort(rng.integers(0, spec.horizon, size=n))
        dsts = rng.integers(0, len(by_src[s]), size=n)
        sizes = spec.size_dist.sample(rng, n)
        for t, di, sz in zip(starts, dsts, sizes):
            raw.append((int(t), s, by_src[s][int(di)], int(sz)))
    raw.sort()
    transport = (Aimd(spec.init_window, spec.mss) if spec.transport == "aimd"
                 else OpenLoop(None, spec.mss))
    return [FlowSpec(fid, s, d, sz, t, transport) for fid, (t, s, d, sz) in enumerate(raw)]


def _round_half_up(num: int, den: int) -> int:
    return (2 * num + den) // (2 * den)


def packetize(net: Network, flows: Sequence[FlowSpec], *, full_size: bool = False) -> list[PacketSpec]:
    """Open-loop packet injections: each flow is paced at its rate (default: host link).

    ``full_size`` pads every packet to the MSS so all packets are MTU-sized.
    """
    out = []
    pid = 0
    for f in flows:
        path = net.route(f.src, f.dst)
        mss = f.transport.mss
        rate = f.transport.rate or net.links[(path[0], path[1])].bandwidth
        size = f.size
        if full_size:
            size = -(-size // mss) * mss
        sent = 0
        while sent < size:
            chunk = min(mss, size - sent)
            t = f.start_time + _round_half_up(sent * 8 * TICKS_PER_SECOND, rate)
            out.append(PacketSpec(pid, f.flow_id, chunk * 8, t, path,
                                  flow_size=size * 8, remaining=(size - sent) * 8))
            pid += 1
            sent += chunk
    out.sort(key=lambda p: (p.ingress_time, p.pkt_id))
    return out


def offered_load(net: Network, flows: Sequence[FlowSpec], link: tuple[int, int], horizon: int) -> float:
    bits = 0
    for f in flows:
        path = net.route(f.src, f.dst)
        if any(l == link for l in zip(path, path[1:])):
            bits += f.size * 8
    return bits / (net.links[link].bandwidth * horizon / TICKS_PER_SECOND)


# -- random replay instances ---------------------------------------------

class GeneratorExhausted(RuntimeError):
    """No instance met the congestion-point bound within the rejection budget."""


@dataclass
class Instance:
    network: Network
    specs: list[PacketSpec]
    original: SchedulerKind
    seed: int
    record: ScheduleRecord | None = None
    attempts: int = 1


_ORIGINALS = ("fifo", "lifo", "sjf", "srpt", "fq", "fifo+")
_PKT_BYTES = (200, 500, 1000, 1500)
_BWS = (GBPS, 2 * GBPS, 5 * GBPS, 10 * GBPS)
_PROPS = (0, 500, 2000)


def gen_random_instance(seed: int, *, max_routers: int = 6, flows: tuple[int, int] = (2, 8),
                        pkts_per_flow: tuple[int, int] = (1, 4), span: int = 30_000,
                        original: str | None = None) -> Instance:
    """Small chain network with random rates, sizes, paths and an arbitrary original.

    Paths are ``h_i, r_i .. r_j, h_j`` so at most ``max_routers + 2`` hops.
    """
    rng = np.random.default_rng([seed, 0x5EED])
    k = int(rng.integers(2, max_routers + 1))
    net = chain(k,
                link_bw=[int(rng.choice(_BWS)) for _ in range(k - 1)],
                host_bw=[int(rng.choice(_BWS)) for _ in range(k)],
                prop=[int(rng.choice(_PROPS)) for _ in range(k - 1)],
                host_prop=int(rng.choice(_PROPS)))
    hosts = net.hosts
    specs = []
    pid = 0
    for fid in range(int(rng.integers(flows[0], flows[1] + 1))):
        s, d = rng.choice(len(hosts), size=2, replace=False)
        path = net.route(hosts[int(s)], hosts[int(d)])
        n = int(rng.integers(pkts_per_flow[0], pkts_per_flow[1] + 1))
        sizes = [int(rng.choice(_PKT_BYTES)) * 8 for _ in range(n)]
        times = np.sort(rng.integers(0, span, size=n))
        total = sum(sizes)
        sent = 0
        for t, sz in zip(times, sizes):
            specs.append(PacketSpec(pid, fid, sz, int(t), path, flow_size=total, remaining=total - sent))
            sent += sz
            pid += 1
    if original is None:
        original = "random" if rng.random() < 0.5 else str(rng.choice(_ORIGINALS))
    return Instance(net, specs, SchedulerKind.parse(original), seed)


def gen_bounded_cp_instance(max_cp: int, seed: int, *, budget: int = 1000,
                            original: str | None = None) -> Instance:
    """Random instance whose recorded congestion profile has <= ``max_cp`` per packet.

    Candidates are drawn from small chains and rejected on the recorded
    profile; the returned instance carries its record.
    """
    if max_cp not in (1, 2):
        raise ValueError("max_cp must be 1 or 2")
    for attempt in range(budget):
        sub = seed * budget + attempt
        rng = np.random.default_rng([sub, max_cp])
        inst = gen_random_instance(sub, max_routers=int(rng.integers(2, 6)),
                                   flows=(2, 3 + 2 * max_cp), pkts_per_flow=(1, 1 + max_cp),
                                   original=original)
        rec = record(inst.network, inst.specs, inst.original, seed=sub)
        if congestion_counts(rec).max_count() <= max_cp:
            inst.record = rec
            inst.attempts = attempt + 1
            return inst
    raise GeneratorExhausted(f"no instance with <= {max_cp} congestion points after {budget} tries")
