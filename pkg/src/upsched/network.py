"""Topology, packets and the uncongested timing algebra.

Every node on a packet's path owns exactly one output port for that packet:
the link towards the next hop, or the exit port at the egress. A port with
zero transmission time is a pass-through and never queues.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

__all__ = [
    "Link", "Network", "Packet", "transmission_ticks", "t_min", "transmission_time",
    "TICKS_PER_SECOND", "ContractError",
]

TICKS_PER_SECOND = 1_000_000_000


class ContractError(ValueError):
    """A caller broke an operation's precondition."""


def transmission_ticks(size_bits: int, bandwidth) -> int:
    """Ceil-rounded ``size_bits / bandwidth`` in ns; ``None`` bandwidth means instant."""
    if bandwidth is None:
        return 0
    num = size_bits * TICKS_PER_SECOND
    if isinstance(bandwidth, float):
        if bandwidth == float("inf"):
            return 0
        if bandwidth.is_integer():
            bandwidth = int(bandwidth)
        else:
            from fractions import Fraction
            q = Fraction(num) / Fraction(bandwidth)
            return -(-q.numerator // q.denominator)
    return -(-num // bandwidth)


@dataclass
class Link:
    src: int
    dst: int
    bandwidth: int | None  # bits per second; None = zero transmission time
    prop_delay: int = 0
    buffer_limit: int | None = None  # bytes; None = unbounded

    def __post_init__(self):
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ContractError("link bandwidth must be positive")
        if self.prop_delay < 0:
            raise ContractError("negative propagation delay")


@dataclass
class Network:
    """Nodes, unidirectional links, egress exit rates and static routes."""

    names: list[str] = field(default_factory=list)
    links: dict[tuple[int, int], Link] = field(default_factory=dict)
    exit_bandwidth: dict[int, int | None] = field(default_factory=dict)
    exit_buffer: dict[int, int | None] = field(default_factory=dict)
    routes: dict[tuple[int, int], tuple[int, ...]] = field(default_factory=dict)
    hosts: list[int] = field(default_factory=list)

    def __post_init__(self):
        self._index = {n: i for i, n in enumerate(self.names)}
        self._adj: dict[int, list[int]] = {}
        for (u, v) in self.links:
            self._adj.setdefault(u, []).append(v)
        self._timing_cache: dict = {}

    # -- construction -------------------------------------------------
    def add_node(self, name: str, exit_bandwidth: int | None = None) -> int:
        if name in self._index:
            raise ContractError(f"duplicate node {name!r}")
        nid = len(self.names)
        self.names.append(name)
        self._index[name] = nid
        self.exit_bandwidth[nid] = exit_bandwidth
        return nid

    def add_link(self, u: int, v: int, bandwidth, prop_delay: int = 0,
                 buffer_limit: int | None = None) -> Link:
        link = Link(u, v, bandwidth, prop_delay, buffer_limit)
        self.links[(u, v)] = link
        adj = self._adj.setdefault(u, [])
        if v not in adj:
            adj.append(v)
        self._timing_cache.clear()
        return link

    def add_duplex(self, u: int, v: int, bandwidth, prop_delay: int = 0,
                   buffer_limit: int | None = None) -> None:
        self.add_link(u, v, bandwidth, prop_delay, buffer_limit)
        self.add_link(v, u, bandwidth, prop_delay, buffer_limit)

    def node(self, name: str) -> int:
        return self._index[name]

    @property
    def n_nodes(self) -> int:
        return len(self.names)

    def set_buffers(self, limit_bytes: int | None) -> None:
        for link in self.links.values():
            link.buffer_limit = limit_bytes

    # -- routing ------------------------------------------------------
    def set_route(self, src: int, dst: int, path: Sequence[int]) -> None:
        path = tuple(path)
        self.check_path(path)
        if path[0] != src or path[-1] != dst:
            raise ContractError("route endpoints do not match")
        self.routes[(src, dst)] = path

    def check_path(self, path: Sequence[int]) -> None:
        if len(set(path)) != len(path):
            raise ContractError(f"path has a loop: {path}")
        for u, v in zip(path, path[1:]):
            if (u, v) not in self.links:
                raise ContractError(f"no link {u}->{v}")

    def route(self, src: int, dst: int) -> tuple[int, ...]:
        """Static route; fills in a BFS shortest path (lowest id wins ties)."""
        key = (src, dst)
        path = self.routes.get(key)
        if path is None:
            path = self._bfs(src, dst)
            self.routes[key] = path
        return path

    def _bfs(self, src: int, dst: int) -> tuple[int, ...]:
        prev = {src: None}
        q = deque([src])
        while q:
            u = q.popleft()
            if u == dst:
                break
            for v in sorted(self._adj.get(u, ())):
                if v not in prev:
                    prev[v] = u
                    q.append(v)
        if dst not in prev:
            raise ContractError(f"no route {src}->{dst}")
        out = [dst]
        while out[-1] != src:
            out.append(prev[out[-1]])
        return tuple(reversed(out))

    # -- timing -------------------------------------------------------
    def port_bandwidth(self, node: int, next_hop: int | None):
        if next_hop is None:
            return self.exit_bandwidth.get(node)
        return self.links[(node, next_hop)].bandwidth

    def port_buffer(self, node: int, next_hop: int | None) -> int | None:
        if next_hop is None:
            return self.exit_buffer.get(node)
        return self.links[(node, next_hop)].buffer_limit

    def timing(self, path: tuple[int, ...], size_bits: int):
        """Per-hop transmission times, per-link propagation and suffix t_min."""
        key = (path, size_bits)
        hit = self._timing_cache.get(key)
        if hit is not None:
            return hit
        n = len(path)
        tx = []
        for h, node in enumerate(path):
            nxt = path[h + 1] if h + 1 < n else None
            tx.append(transmission_ticks(size_bits, self.port_bandwidth(node, nxt)))
        prop = [self.links[(path[h], path[h + 1])].prop_delay for h in range(n - 1)]
        suffix = [0] * n
        acc = 0
        for h in range(n - 1, -1, -1):
            acc += tx[h]
            suffix[h] = acc
            if h > 0:
                acc += prop[h - 1]
        hit = (tuple(tx), tuple(prop), tuple(suffix))
        self._timing_cache[key] = hit
        return hit

    def links_on(self, path: Iterable[int]) -> list[tuple[int, int]]:
        path = list(path)
        return list(zip(path, path[1:]))


class Packet:
    """A packet plus its scheduling header and per-hop bookkeeping."""

    __slots__ = (
        "pkt_id", "flow_id", "size", "ingress_time", "path", "hop", "tx", "prop", "tmin_suffix",
        "slack", "priority", "hop_times", "deadline", "acc_wait",
        "seq", "flow_size", "remaining", "retransmit",
        "arrivals", "starts", "departs", "exit_time", "dropped", "residual",
    )

    def __init__(self, pkt_id: int, flow_id: int, size: int, ingress_time: int,
                 path: tuple[int, ...], network: Network):
        if size <= 0:
            raise ContractError("packet size must be positive")
        self.pkt_id = pkt_id
        self.flow_id = flow_id
        self.size = size
        self.ingress_time = ingress_time
        self.path = path
        self.hop = 0
        self.tx, self.prop, self.tmin_suffix = network.timing(path, size)
        self.slack = 0
        self.priority = 0
        self.hop_times: tuple[int, ...] | None = None
        self.deadline = 0
        self.acc_wait = 0
        self.seq = 0
        self.flow_size = size
        self.remaining = size
        self.retransmit = False
        n = len(path)
        self.arrivals = [None] * n
        self.starts = [None] * n
        self.departs = [None] * n
        self.exit_time = None
        self.dropped = False
        self.residual = None

    @property
    def src(self) -> int:
        return self.path[0]

    @property
    def dest(self) -> int:
        return self.path[-1]

    def index_of(self, node: int) -> int:
        try:
            return self.path.index(node)
        except ValueError:
            raise ContractError(f"node {node} not on path {self.path}") from None

    def __repr__(self):
        return f"Packet({self.pkt_id}, flow={self.flow_id}, hop={self.hop}/{len(self.path)})"


def transmission_time(p: Packet, node: int) -> int:
    return p.tx[p.index_of(node)]


def t_min(p: Packet, a: int, b: int) -> int:
    """Uncongested time from ``a`` (incl. its transmission) to exit of ``b``."""
    ia, ib = p.index_of(a), p.index_of(b)
    if ia > ib:
        raise ContractError("t_min: a must not come after b on the path")
    return sum(p.tx[ia:ib + 1]) + sum(p.prop[ia:ib])
