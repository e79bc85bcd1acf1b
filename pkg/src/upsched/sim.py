"""Store-and-forward packet network on top of the event kernel."""

from __future__ import annotations

import logging
from typing import Callable, Iterable

from .kernel import PHASE_DECIDE, Kernel
from .network import Network, Packet
from .schedulers import SchedulerKind, make_scheduler

__all__ = ["Simulation", "Port"]

log = logging.getLogger(__name__)


class Port:
    __slots__ = ("node", "next_hop", "sched", "busy", "entry", "seg_start", "seg_len",
                 "completion", "pending", "limit_bits")

    def __init__(self, node, next_hop, sched, limit_bits):
        self.node = node
        self.next_hop = next_hop
        self.sched = sched
        self.busy: Packet | None = None
        self.entry = None
        self.seg_start = 0
        self.seg_len = 0
        self.completion = None
        self.pending = False
        self.limit_bits = limit_bits


class Simulation:
    """One simulation instance: a network, a scheduler assignment and a kernel.

    Within a tick, arrivals are handled before any port picks its next packet,
    so a packet arriving exactly when a port frees up competes for it.
    """

    def __init__(self, network: Network, scheduler: SchedulerKind | str, *, seed: int = 0,
                 trace: bool = False, probe: list | None = None,
                 on_exit: Callable[[Packet, int], None] | None = None,
                 on_drop: Callable[[Packet, int, int], None] | None = None,
                 scheduler_options: dict | None = None):
        if isinstance(scheduler, str):
            scheduler = SchedulerKind.parse(scheduler)
        self.network = network
        self.kind = scheduler
        self.preemptive = scheduler.preemptive
        self.seed = seed
        self.kernel = Kernel(trace=trace)
        self.trace: list | None = [] if trace else None
        self.probe = probe
        self.on_exit = on_exit
        self.on_drop = on_drop
        self._options = scheduler_options or {}
        self._ports: dict[tuple[int, int | None], Port] = {}
        self.injected = 0
        self.exited = 0
        self.dropped = 0
        self.preemptions = 0
        self._next_pkt_id = 0

    # -- plumbing -------------------------------------------------------
    def new_packet_id(self) -> int:
        pid = self._next_pkt_id
        self._next_pkt_id += 1
        return pid

    @property
    def next_packet_id(self) -> int:
        """Id the next ``new_packet_id`` call will hand out."""
        return self._next_pkt_id

    @property
    def now(self) -> int:
        return self.kernel.now

    def port(self, node: int, next_hop: int | None) -> Port:
        key = (node, next_hop)
        port = self._ports.get(key)
        if port is None:
            limit = self.network.port_buffer(node, next_hop)
            limit_bits = None if limit is None else limit * 8
            opts = dict(self._options)
            if limit_bits is not None:
                opts["track_max"] = True
            if self.probe is not None:
                opts["probe"] = self.probe
            sched = make_scheduler(self.kind, node, next_hop, self.network, seed=self.seed, **opts)
            port = Port(node, next_hop, sched, limit_bits)
            self._ports[key] = port
        return port

    def ports(self) -> Iterable[Port]:
        return self._ports.values()

    # -- public API -----------------------------------------------------
    def inject(self, pkt: Packet, at: int | None = None) -> None:
        if at is None:
            at = pkt.ingress_time
        if at != pkt.ingress_time:
            raise ValueError("injection time must equal the packet's ingress time")
        self.injected += 1
        self.kernel.schedule(at, self._arrive, pkt, kind="arrival")

    def inject_all(self, pkts: Iterable[Packet]) -> None:
        for p in sorted(pkts, key=lambda p: (p.ingress_time, p.pkt_id)):
            self.inject(p)

    def run(self, until: int | None = None):
        return self.kernel.run_until(until)

    # -- packet life cycle ----------------------------------------------
    def _arrive(self, pkt: Packet) -> None:
        now = self.kernel.now
        h = pkt.hop
        pkt.arrivals[h] = now
        last = h == len(pkt.path) - 1
        if pkt.tx[h] == 0:
            pkt.starts[h] = now
            pkt.departs[h] = now
            self._forward(pkt, now)
            return
        node = pkt.path[h]
        port = self.port(node, None if last else pkt.path[h + 1])
        sched = port.sched
        if port.limit_bits is not None and sched.queued_bits + pkt.size > port.limit_bits:
            while sched.queued_bits + pkt.size > port.limit_bits:
                victim = sched.drop_candidate(pkt, now)
                if victim is pkt:
                    self._drop(pkt, node, now)
                    return
                sched.remove(victim)
                self._drop(victim, node, now)
        sched.enqueue(pkt, now)
        if not port.pending and (port.busy is None or self.preemptive):
            port.pending = True
            self.kernel.schedule(now, self._decide, port, phase=PHASE_DECIDE, kind="decide")

    def _drop(self, pkt: Packet, node: int, now: int) -> None:
        pkt.dropped = True
        self.dropped += 1
        if self.on_drop is not None:
            self.on_drop(pkt, node, now)

    def _decide(self, port: Port) -> None:
        port.pending = False
        now = self.kernel.now
        sched = port.sched
        if port.busy is None:
            pkt = sched.dequeue(now)
            if pkt is not None:
                self._start(port, pkt, now)
            return
        best = sched.peek()
        if best is not None and best[0] < port.entry[0]:
            cur = port.busy
            cur.residual = port.seg_len - (now - port.seg_start)
            self.kernel.cancel(port.completion)
            sched.requeue(port.entry)
            self.preemptions += 1
            if self.trace is not None:
                self.trace.append((now, port.node, port.next_hop, cur.pkt_id, "preempt"))
            self._start(port, sched.dequeue(now), now)

    def _start(self, port: Port, pkt: Packet, now: int) -> None:
        h = pkt.hop
        if pkt.starts[h] is None:
            pkt.starts[h] = now
        rem = pkt.residual if pkt.residual is not None else pkt.tx[h]
        pkt.residual = None
        port.busy = pkt
        port.entry = port.sched.last_entry if port.sched.keyed else None
        port.seg_start = now
        port.seg_len = rem
        port.completion = self.kernel.schedule(now + rem, self._complete, port, kind="complete")
        if self.trace is not None:
            self.trace.append((now, port.node, port.next_hop, pkt.pkt_id, "start"))

    def _complete(self, port: Port) -> None:
        now = self.kernel.now
        pkt = port.busy
        port.busy = None
        port.entry = None
        port.completion = None
        pkt.departs[pkt.hop] = now
        port.sched.on_depart(pkt, now)
        self._forward(pkt, now)
        if len(port.sched) and not port.pending:
            port.pending = True
            self.kernel.schedule(now, self._decide, port, phase=PHASE_DECIDE, kind="decide")

    def _forward(self, pkt: Packet, now: int) -> None:
        h = pkt.hop
        if h == len(pkt.path) - 1:
            pkt.exit_time = now
            self.exited += 1
            if self.on_exit is not None:
                self.on_exit(pkt, now)
            return
        pkt.hop = h + 1
        self.kernel.schedule(now + pkt.prop[h], self._arrive, pkt, kind="arrival")
