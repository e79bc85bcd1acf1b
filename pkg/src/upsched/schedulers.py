"""Per-output-port queue disciplines.

Every scheduler serves one output port. The simulation calls ``enqueue`` when
a packet has fully arrived, ``dequeue`` when the port goes idle, and
``on_depart`` once the packet's last bit has left the port (header rewrites
happen there). Keyed disciplines order by ``(key, enqueue_time, seq)`` so
ties are always FCFS, and they can be run preemptively.
"""

from __future__ import annotations

import heapq
import random
from collections import deque
from dataclasses import dataclass, field

from .network import Network, Packet

__all__ = [
    "Scheduler", "KeyedScheduler", "FifoScheduler", "LifoScheduler", "RandomScheduler",
    "SjfScheduler", "SrptScheduler", "FqScheduler", "PriorityScheduler", "OmniscientScheduler",
    "LstfScheduler", "EdfScheduler", "FifoPlusScheduler", "SchedulerKind", "make_scheduler",
    "SCHEDULER_TAGS",
]


class Scheduler:
    keyed = False
    slack_based = False

    def __init__(self, node: int, next_hop: int | None, network: Network | None = None, **_):
        self.node = node
        self.next_hop = next_hop
        self.network = network
        self.queued_bits = 0

    def enqueue(self, pkt: Packet, now: int) -> None:
        raise NotImplementedError

    def dequeue(self, now: int) -> Packet | None:
        raise NotImplementedError

    def __len__(self) -> int:
        raise NotImplementedError

    def on_depart(self, pkt: Packet, now: int) -> None:
        """Called when the last bit of ``pkt`` leaves this port."""

    def drop_candidate(self, arrival: Packet, now: int) -> Packet:
        """Packet to drop when ``arrival`` overflows the buffer (tail drop)."""
        return arrival

    def remove(self, pkt: Packet) -> None:
        raise NotImplementedError(f"{type(self).__name__} only tail-drops")


class FifoScheduler(Scheduler):
    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self._q: deque[Packet] = deque()

    def enqueue(self, pkt, now):
        self._q.append(pkt)
        self.queued_bits += pkt.size

    def dequeue(self, now):
        if not self._q:
            return None
        pkt = self._q.popleft()
        self.queued_bits -= pkt.size
        return pkt

    def __len__(self):
        return len(self._q)


class LifoScheduler(FifoScheduler):
    def dequeue(self, now):
        if not self._q:
            return None
        pkt = self._q.pop()
        self.queued_bits -= pkt.size
        return pkt


class RandomScheduler(Scheduler):
    """Uniform pick over queued packets from a per-port seeded stream."""

    def __init__(self, node, next_hop, network=None, seed: int = 0, **kw):
        super().__init__(node, next_hop, network)
        self._rng = random.Random(f"random/{seed}/{node}/{next_hop}")
        self._q: list[Packet] = []

    def enqueue(self, pkt, now):
        self._q.append(pkt)
        self.queued_bits += pkt.size

    def dequeue(self, now):
        q = self._q
        if not q:
            return None
        i = self._rng.randrange(len(q))
        q[i], q[-1] = q[-1], q[i]
        pkt = q.pop()
        self.queued_bits -= pkt.size
        return pkt

    def __len__(self):
        return len(self._q)


class KeyedScheduler(Scheduler):
    """Min-key heap with FCFS tie-break; entries are ``[key, enq_time, seq, pkt, alive]``."""

    keyed = True

    def __init__(self, *a, track_max: bool = False, **kw):
        super().__init__(*a, **kw)
        self._heap: list = []
        self._max: list | None = [] if track_max else None
        self._n = 0
        self._seq = 0
        self.last_entry = None
        self._entry_of: dict[int, list] = {}

    def key(self, pkt: Packet, now: int):
        raise NotImplementedError

    def enqueue(self, pkt, now):
        e = [self.key(pkt, now), now, self._seq, pkt, True]
        self._seq += 1
        self._push(e)

    def _push(self, e):
        heapq.heappush(self._heap, e)
        if self._max is not None:
            heapq.heappush(self._max, (-e[0], -e[2], e))
            self._entry_of[e[3].pkt_id] = e
        self._n += 1
        self.queued_bits += e[3].size

    def requeue(self, entry) -> None:
        """Put a preempted entry back with its original key and position."""
        entry[4] = True
        self._push(entry)

    def peek(self):
        h = self._heap
        while h and not h[0][4]:
            heapq.heappop(h)
        return h[0] if h else None

    def _take(self, e):
        e[4] = False
        self._n -= 1
        self.queued_bits -= e[3].size
        if self._max is not None:
            self._entry_of.pop(e[3].pkt_id, None)
        self.last_entry = e
        return e[3]

    def dequeue(self, now):
        e = self.peek()
        if e is None:
            return None
        heapq.heappop(self._heap)
        return self._take(e)

    def __len__(self):
        return self._n

    def drop_candidate(self, arrival, now):
        if not self.slack_based or self._max is None:
            return arrival
        m = self._max
        while m and not m[0][2][4]:
            heapq.heappop(m)
        if not m:
            return arrival
        # an arrival with equal slack loses: it is the later packet
        if self.key(arrival, now) >= m[0][2][0]:
            return arrival
        return m[0][2][3]

    def remove(self, pkt):
        e = self._entry_of.get(pkt.pkt_id)
        if e is None or not e[4]:
            raise KeyError(pkt.pkt_id)
        self._take(e)


class SjfScheduler(KeyedScheduler):
    def key(self, pkt, now):
        return pkt.flow_size


class PriorityScheduler(KeyedScheduler):
    def key(self, pkt, now):
        return pkt.priority


class OmniscientScheduler(KeyedScheduler):
    """Priority = original scheduling time at this hop, read from the header vector."""

    def key(self, pkt, now):
        return pkt.hop_times[pkt.hop]


class LstfScheduler(KeyedScheduler):
    """Least slack time first on the last-bit remaining slack.

    While queued, the last-bit slack is ``header - (t - enqueue) + T``; every
    queued packet decays at the same rate, so ``header + enqueue + T`` is a
    time-invariant key.
    """

    slack_based = True

    def __init__(self, *a, probe: list | None = None, **kw):
        super().__init__(*a, **kw)
        self.probe = probe

    def key(self, pkt, now):
        return pkt.slack + now + pkt.tx[pkt.hop]

    def dequeue(self, now):
        pkt = super().dequeue(now)
        if pkt is not None and self.probe is not None:
            h = pkt.hop
            self.probe.append((pkt.pkt_id, self.node, now,
                               pkt.slack - (now - pkt.arrivals[h]) + pkt.tx[h]))
        return pkt

    def on_depart(self, pkt, now):
        h = pkt.hop
        pkt.slack -= now - pkt.arrivals[h] - pkt.tx[h]


class EdfScheduler(KeyedScheduler):
    """Local deadline from a static ``o(p)`` header and downstream t_min."""

    slack_based = True

    def key(self, pkt, now):
        h = pkt.hop
        return pkt.deadline - pkt.tmin_suffix[h] + pkt.tx[h]


class FifoPlusScheduler(KeyedScheduler):
    """FIFO on arrival time corrected by queueing already suffered upstream."""

    slack_based = True

    def key(self, pkt, now):
        return now - pkt.acc_wait

    def on_depart(self, pkt, now):
        h = pkt.hop
        pkt.acc_wait += now - pkt.arrivals[h] - pkt.tx[h]


class SrptScheduler(KeyedScheduler):
    """Shortest remaining flow bytes, with pFabric-style starvation prevention.

    The flow holding the best packet is served, but with its earliest queued
    packet.
    """

    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self._flows: dict[int, deque] = {}

    def key(self, pkt, now):
        return pkt.remaining

    def _push(self, e):
        super()._push(e)
        self._flows.setdefault(e[3].flow_id, deque()).append(e)

    def dequeue(self, now):
        best = self.peek()
        if best is None:
            return None
        fq = self._flows[best[3].flow_id]
        while not fq[0][4]:
            fq.popleft()
        e = fq.popleft()
        if not fq:
            del self._flows[best[3].flow_id]
        return self._take(e)


class FqScheduler(KeyedScheduler):
    """Weighted fair queueing: serve smallest GPS virtual finish tag.

    The virtual clock is advanced by emulating the fluid bit-by-bit round
    robin system, whose rate per unit weight is ``capacity / active weight``.
    """

    def __init__(self, node, next_hop, network=None, weights: dict | None = None, **kw):
        super().__init__(node, next_hop, network, **kw)
        bw = network.port_bandwidth(node, next_hop) if network is not None else None
        self._rate = (bw / 1e9) if bw else 1.0  # bits per tick
        self._weights = weights or {}
        self._V = 0.0
        self._t = 0
        self._last_finish: dict[int, float] = {}
        self._active: dict[int, float] = {}
        self._gps: list = []
        self._wsum = 0.0

    def _w(self, flow):
        return self._weights.get(flow, 1.0)

    def _advance(self, now):
        t, V = self._t, self._V
        gps, active = self._gps, self._active
        while active:
            while gps[0][0] != active.get(gps[0][1]):
                heapq.heappop(gps)
            fmin, flow = gps[0]
            need = (fmin - V) * self._wsum / self._rate
            if t + need <= now:
                t += need
                V = fmin
                heapq.heappop(gps)
                del active[flow]
                self._wsum -= self._w(flow)
            else:
                V += (now - t) * self._rate / self._wsum
                break
        self._t, self._V = now, V

    def key(self, pkt, now):
        self._advance(now)
        f = pkt.flow_id
        start = max(self._V, self._last_finish.get(f, 0.0))
        finish = start + pkt.size / self._w(f)
        self._last_finish[f] = finish
        if f not in self._active:
            self._wsum += self._w(f)
        self._active[f] = finish
        heapq.heappush(self._gps, (finish, f))
        return finish


_CLASSES = {
    "fifo": FifoScheduler,
    "lifo": LifoScheduler,
    "random": RandomScheduler,
    "sjf": SjfScheduler,
    "srpt": SrptScheduler,
    "fq": FqScheduler,
    "priority": PriorityScheduler,
    "omniscient": OmniscientScheduler,
    "lstf": LstfScheduler,
    "edf": EdfScheduler,
    "fifo+": FifoPlusScheduler,
}

SCHEDULER_TAGS = tuple(_CLASSES) + ("fq/fifo+",)


@dataclass(frozen=True)
class SchedulerKind:
    """A discipline tag plus options; ``per_node`` makes it a mixed assignment."""

    name: str
    preemptive: bool = False
    per_node: tuple = field(default=())

    @classmethod
    def parse(cls, tag: str) -> "SchedulerKind":
        tag = tag.strip().lower()
        preemptive = False
        for suffix in (":preemptive", "-preemptive", "_preemptive"):
            if tag.endswith(suffix):
                tag, preemptive = tag[: -len(suffix)], True
        if tag in ("plstf", "lstf-p"):
            tag, preemptive = "lstf", True
        if tag == "fifo_plus":
            tag = "fifo+"
        if tag not in _CLASSES and tag != "fq/fifo+":
            raise ValueError(f"unknown scheduler {tag!r}")
        if preemptive and (tag not in _CLASSES or not _CLASSES[tag].keyed):
            raise ValueError(f"{tag} cannot run preemptively")
        return cls(tag, preemptive)

    @classmethod
    def mixed(cls, assignment: dict[int, str]) -> "SchedulerKind":
        return cls("mixed", False, tuple(sorted(assignment.items())))

    def tag_for(self, node: int) -> str:
        if self.name == "fq/fifo+":
            return "fq" if node % 2 == 0 else "fifo+"
        if self.name == "mixed":
            return dict(self.per_node)[node]
        return self.name

    def __str__(self):
        if self.name == "mixed":
            return "mixed(" + ",".join(f"{n}={k}" for n, k in self.per_node) + ")"
        return self.name + (":preemptive" if self.preemptive else "")


def make_scheduler(kind: SchedulerKind | str, node: int, next_hop: int | None,
                   network: Network, seed: int = 0, **options) -> Scheduler:
    if isinstance(kind, str):
        kind = SchedulerKind.parse(kind)
    cls = _CLASSES[kind.tag_for(node)]
    return cls(node, next_hop, network, seed=seed, **options)
