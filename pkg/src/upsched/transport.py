"""Traffic sources: paced open-loop flows and a minimal AIMD window transport.

The AIMD source has no slow start and no timeouts. A drop is reported back
to the sender after the propagation delay between the sender and the
dropping node; an ack travels back along the reverse route's propagation
delay only.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .network import Network, Packet, TICKS_PER_SECOND
from .schedulers import SchedulerKind
from .sim import Simulation

__all__ = ["OpenLoop", "Aimd", "FlowSpec", "AimdState", "TransportRun", "TransportResult"]


@dataclass(frozen=True)
class OpenLoop:
    rate: int | None = None  # bits/s; None paces at the first-hop link rate
    mss: int = 1500


@dataclass(frozen=True)
class Aimd:
    init_window: float = 1.0
    mss: int = 1500


@dataclass(frozen=True)
class FlowSpec:
    flow_id: int
    src: int
    dst: int
    size: int | None  # bytes; None = long-lived
    start_time: int
    transport: OpenLoop | Aimd = OpenLoop()

    def n_packets(self) -> int | None:
        if self.size is None:
            return None
        return max(1, -(-self.size // self.transport.mss))

    def packet_bytes(self, seq: int) -> int:
        mss = self.transport.mss
        if self.size is None:
            return mss
        return min(mss, self.size - seq * mss)

    @property
    def padded_bytes(self) -> int | None:
        n = self.n_packets()
        return None if n is None else n * self.transport.mss


@dataclass
class AimdState:
    cwnd: float
    next_seq: int = 0
    in_flight: set = field(default_factory=set)
    retransmit: deque = field(default_factory=deque)
    acked: set = field(default_factory=set)
    recover: int = -1  # losses of packets sent before this packet id do not halve again
    done_at: int | None = None

    def window(self) -> int:
        return math.ceil(self.cwnd - 1e-12)


@dataclass
class TransportResult:
    fct: dict[int, int | None]
    delivered: np.ndarray  # rows: flow_id, exit_time, bits, delay, ingress_time
    sent: int
    dropped: int
    acked: int
    preemptions: int
    trace: list | None = None

    def delays(self) -> np.ndarray:
        return self.delivered[:, 3] if len(self.delivered) else np.zeros(0, np.int64)


Stamp = Callable[[Packet, FlowSpec, int], None]


class TransportRun:
    """Drive a set of flows through one simulation and collect deliveries."""

    def __init__(self, network: Network, scheduler: SchedulerKind | str, flows: Sequence[FlowSpec], *,
                 seed: int = 0, stamp: Stamp | None = None, trace: bool = False,
                 scheduler_options: dict | None = None):
        self.network = network
        self.flows = {f.flow_id: f for f in flows}
        self.stamp = stamp
        self.sim = Simulation(network, scheduler, seed=seed, trace=trace, on_exit=self._on_exit,
                              on_drop=self._on_drop, scheduler_options=scheduler_options)
        self.paths = {f.flow_id: network.route(f.src, f.dst) for f in flows}
        self.state: dict[int, AimdState] = {}
        self.fct: dict[int, int | None] = {f.flow_id: None for f in flows}
        self._delivered: list[tuple] = []
        self._left: dict[int, int] = {}
        self.sent = 0
        self.acked = 0
        self.dropped = 0
        for f in sorted(flows, key=lambda f: (f.start_time, f.flow_id)):
            if isinstance(f.transport, Aimd):
                self.state[f.flow_id] = AimdState(max(1.0, f.transport.init_window))
                self.sim.kernel.schedule(f.start_time, self._wake, f, kind="source-wakeup")
        self._open_loop([f for f in flows if isinstance(f.transport, OpenLoop)])

    # -- helpers --------------------------------------------------------
    def _prop_between(self, path, upto: int) -> int:
        return sum(self.network.links[(u, v)].prop_delay for u, v in zip(path[:upto], path[1:upto + 1]))

    def _make(self, f: FlowSpec, seq: int, now: int) -> Packet:
        path = self.paths[f.flow_id]
        mss = f.transport.mss
        p = Packet(self.sim.new_packet_id(), f.flow_id, f.packet_bytes(seq) * 8, now, path, self.network)
        p.seq = seq
        padded = f.padded_bytes
        if padded is None:
            p.flow_size = 1 << 62
            p.remaining = 1 << 62
        else:
            p.flow_size = padded * 8
            p.remaining = (padded - seq * mss) * 8
        if self.stamp is not None:
            self.stamp(p, f, now)
        self.sent += 1
        return p

    def _open_loop(self, flows: list[FlowSpec]) -> None:
        sched = []
        for f in flows:
            n = f.n_packets()
            if n is None:
                raise ValueError("open-loop flows need a finite size")
            path = self.paths[f.flow_id]
            rate = f.transport.rate or self.network.links[(path[0], path[1])].bandwidth
            self._left[f.flow_id] = n
            off = 0
            for seq in range(n):
                t = f.start_time + (2 * off * 8 * TICKS_PER_SECOND + rate) // (2 * rate)
                sched.append((t, f.flow_id, seq))
                off += f.packet_bytes(seq)
        sched.sort()
        for t, fid, seq in sched:
            self.sim.inject(self._make(self.flows[fid], seq, t))

    # -- AIMD -----------------------------------------------------------
    def _wake(self, f: FlowSpec) -> None:
        self._pump(f)

    def _pump(self, f: FlowSpec) -> None:
        st = self.state[f.flow_id]
        n = f.n_packets()
        now = self.sim.now
        while len(st.in_flight) < st.window():
            if st.retransmit:
                seq = st.retransmit.popleft()
            elif n is None or st.next_seq < n:
                seq = st.next_seq
                st.next_seq += 1
            else:
                break
            st.in_flight.add(seq)
            self.sim.inject(self._make(f, seq, now))

    def _ack(self, f: FlowSpec, seq: int) -> None:
        st = self.state[f.flow_id]
        st.in_flight.discard(seq)
        st.acked.add(seq)
        self.acked += 1
        st.cwnd += 1.0 / st.cwnd
        n = f.n_packets()
        if n is not None and len(st.acked) == n:
            st.done_at = self.sim.now
            self.fct[f.flow_id] = self.sim.now - f.start_time
            return
        self._pump(f)

    def _loss(self, f: FlowSpec, seq: int, pkt_id: int) -> None:
        # at most one halving per window of sent packets; a lost retransmission
        # was sent after the last halving and so can halve again
        st = self.state[f.flow_id]
        st.in_flight.discard(seq)
        st.retransmit.append(seq)
        if pkt_id >= st.recover:
            st.cwnd = max(1.0, st.cwnd / 2)
            st.recover = self.sim.next_packet_id
        self._pump(f)

    # -- simulation callbacks -------------------------------------------
    def _on_exit(self, p: Packet, now: int) -> None:
        f = self.flows[p.flow_id]
        self._delivered.append((p.flow_id, now, p.size, now - p.ingress_time, p.ingress_time))
        if isinstance(f.transport, Aimd):
            back = self.network.route(f.dst, f.src)
            delay = self._prop_between(back, len(back) - 1)
            self.sim.kernel.schedule(now + delay, self._ack, f, p.seq, kind="ack")
        else:
            self._left[f.flow_id] -= 1
            if self._left[f.flow_id] == 0:
                self.fct[f.flow_id] = now - f.start_time

    def _on_drop(self, p: Packet, node: int, now: int) -> None:
        self.dropped += 1
        f = self.flows[p.flow_id]
        if isinstance(f.transport, Aimd):
            delay = self._prop_between(p.path, p.path.index(node))
            self.sim.kernel.schedule(now + delay, self._loss, f, p.seq, p.pkt_id, kind="drop-signal")

    def run(self, until: int | None = None) -> TransportResult:
        self.sim.run(until)
        rows = np.array(self._delivered, dtype=np.int64).reshape(-1, 5)
        return TransportResult(dict(self.fct), rows, self.sent, self.dropped, self.acked,
                               self.sim.preemptions, self.sim.trace)
