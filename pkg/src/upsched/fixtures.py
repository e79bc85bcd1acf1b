"""Hand-built counterexample scenarios with exact expected event tables.

Every congested router ``alphaK`` owns one shared output link to a splitter
node ``wK``; ingresses, egresses, splitters and their links have zero
transmission time, so only the routers can queue. Fixture time is expressed
in units of ``UNIT`` ticks (1 unit = 10 ns), which keeps the 0.5 and 0.2
unit transmission times integral.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import permutations

from .network import Network
from .replay import PacketSpec, RecordError, ScheduleRecord, record, replay

__all__ = [
    "UNIT", "FIXTURE_PKT_BITS", "Fixture", "build_fixture", "FIXTURES", "units", "fmt_units",
    "fixture_record", "schedule_table", "priority_orderings", "fixture_report", "FIXTURE_CANDIDATES",
]

UNIT = 10
FIXTURE_PKT_BITS = 1000


def units(x) -> int:
    """Fixture time (possibly fractional units) to ticks."""
    v = Fraction(str(x)) * UNIT
    if v.denominator != 1:
        raise ValueError(f"{x} units is not a whole number of ticks")
    return int(v)


@dataclass
class Fixture:
    name: str
    routers: dict[str, object]              # router -> transmission time in units
    flows: dict[str, list[str]]             # flow -> routers visited
    packets: dict[str, tuple[str, object]]  # packet -> (flow, ingress time)
    original: dict[str, list[tuple]]        # router -> [(packet, arrival, scheduled)]
    props: dict[tuple[str, str], object] = field(default_factory=dict)
    lstf_replay: dict[str, list[tuple]] | None = None
    note: str = ""

    # populated by build()
    network: Network | None = None
    pkt_ids: dict[str, int] = field(default_factory=dict)
    specs: list[PacketSpec] = field(default_factory=list)

    def name_of(self, pkt_id: int) -> str:
        inv = {v: k for k, v in self.pkt_ids.items()}
        return inv[pkt_id]

    def router_node(self, router: str) -> int:
        return self.network.node(router)


def fmt_units(ticks: int) -> str:
    v = Fraction(ticks, UNIT)
    return str(v.numerator) if v.denominator == 1 else str(float(v))


def _bw_for(tx_units) -> int:
    ticks = units(tx_units)
    bw = Fraction(FIXTURE_PKT_BITS * 10**9, ticks)
    assert bw.denominator == 1
    return int(bw)


def build_fixture(fx: Fixture) -> Fixture:
    net = Network()
    for r in fx.routers:
        net.add_node(r)
        net.add_node("w" + r.removeprefix("alpha"))
    for r, tx in fx.routers.items():
        net.add_link(net.node(r), net.node("w" + r.removeprefix("alpha")), _bw_for(tx))
    paths = {}
    for flow, routers in fx.flows.items():
        s = net.add_node("S_" + flow)
        d = net.add_node("D_" + flow)
        path = [s]
        for k, r in enumerate(routers):
            rn, wn = net.node(r), net.node("w" + r.removeprefix("alpha"))
            prev = path[-1]
            if (prev, rn) not in net.links:
                prop = fx.props.get((routers[k - 1] if k else "S_" + flow, r), 0)
                net.add_link(prev, rn, None, units(prop))
            path += [rn, wn]
        net.add_link(path[-1], d, None, 0)
        path.append(d)
        net.set_route(s, d, path)
        paths[flow] = tuple(path)
    # omniscient hop vectors reproduce the scripted original decisions
    sched_at: dict[tuple[str, str], int] = {}
    for r, rows in fx.original.items():
        for pkt, _arr, sched in rows:
            sched_at[(pkt, r)] = units(sched)
    fx.network = net
    fx.pkt_ids = {}
    fx.specs = []
    for pid, (pkt, (flow, t0)) in enumerate(fx.packets.items()):
        path = paths[flow]
        hop_times = tuple(sched_at.get((pkt, net.names[n]), 0) for n in path)
        fx.pkt_ids[pkt] = pid
        fx.specs.append(PacketSpec(pid, list(fx.flows).index(flow), FIXTURE_PKT_BITS, units(t0),
                                   path, hop_times=hop_times))
    return fx


def lstf_three_hop() -> Fixture:
    return build_fixture(Fixture(
        name="lstf_three_hop",
        routers={"alpha0": 1, "alpha1": 1, "alpha2": 1},
        flows={"A": ["alpha0", "alpha1", "alpha2"], "B": ["alpha0"], "C": ["alpha1"],
               "D": ["alpha2"]},
        packets={"a": ("A", 0), "b": ("B", 0), "c1": ("C", 2), "c2": ("C", 3),
                 "d1": ("D", 2), "d2": ("D", 3)},
        original={
            "alpha0": [("a", 0, 0), ("b", 0, 1)],
            "alpha1": [("a", 1, 1), ("c1", 2, 2), ("c2", 3, 3)],
            "alpha2": [("d1", 2, 2), ("d2", 3, 3), ("a", 2, 4)],
        },
        lstf_replay={
            "alpha0": [("b", 0, 0), ("a", 0, 1)],
            "alpha1": [("c1", 2, 2), ("a", 2, 3), ("c2", 3, 4)],
            "alpha2": [("d1", 2, 2), ("d2", 3, 3), ("a", 4, 4)],
        },
        note="a crosses three busy routers; LSTF replay leaves c2 overdue",
    ))


_C_FLOWS = {"A": ["alpha0", "alpha1", "alpha2"], "X": ["alpha0", "alpha3", "alpha4"],
            "B": ["alpha1"], "C": ["alpha2"], "Y": ["alpha3"], "Z": ["alpha4"]}
_C_PACKETS = {"a": ("A", 0), "x": ("X", 0), "b1": ("B", 2), "b2": ("B", 3), "b3": ("B", 4),
              "c1": ("C", 2), "c2": ("C", 3), "y1": ("Y", 2), "y2": ("Y", 3), "z": ("Z", 2)}
_C_ROUTERS = {f"alpha{k}": 1 for k in range(5)}


def no_ups_case1() -> Fixture:
    return build_fixture(Fixture(
        name="no_ups_case1", routers=dict(_C_ROUTERS), flows=dict(_C_FLOWS),
        packets=dict(_C_PACKETS),
        original={
            "alpha0": [("a", 0, 0), ("x", 0, 1)],
            "alpha1": [("a", 1, 1), ("b1", 2, 2), ("b2", 3, 3), ("b3", 4, 4)],
            "alpha2": [("c1", 2, 2), ("c2", 3, 3), ("a", 2, 4)],
            "alpha3": [("x", 2, 2), ("y1", 2, 3), ("y2", 3, 4)],
            "alpha4": [("z", 2, 2), ("x", 3, 3)],
        },
        note="needs a before x at alpha0",
    ))


def no_ups_case2() -> Fixture:
    return build_fixture(Fixture(
        name="no_ups_case2", routers=dict(_C_ROUTERS), flows=dict(_C_FLOWS),
        packets=dict(_C_PACKETS),
        original={
            "alpha0": [("x", 0, 0), ("a", 0, 1)],
            "alpha1": [("a", 2, 2), ("b1", 2, 3), ("b2", 3, 4), ("b3", 4, 5)],
            "alpha2": [("c1", 2, 2), ("c2", 3, 3), ("a", 3, 4)],
            "alpha3": [("x", 1, 1), ("y1", 2, 2), ("y2", 3, 3)],
            "alpha4": [("z", 2, 2), ("x", 2, 3)],
        },
        note="needs x before a at alpha0",
    ))


def priority_cycle() -> Fixture:
    return build_fixture(Fixture(
        name="priority_cycle",
        routers={"alpha1": 1, "alpha2": "0.5", "alpha3": "0.2"},
        flows={"A": ["alpha1", "alpha3"], "B": ["alpha1", "alpha2"], "C": ["alpha2", "alpha3"]},
        packets={"a": ("A", 0), "b": ("B", 0), "c": ("C", 2)},
        original={
            "alpha1": [("a", 0, 0), ("b", 0, 1)],
            "alpha2": [("b", 2, 2), ("c", 2, "2.5")],
            "alpha3": [("c", 3, 3), ("a", 3, "3.2")],
        },
        props={("alpha1", "alpha3"): 2},
        note="a<b at alpha1, b<c at alpha2, c<a at alpha3: a priority cycle",
    ))


FIXTURES = {
    "lstf_three_hop": lstf_three_hop,
    "no_ups_case1": no_ups_case1,
    "no_ups_case2": no_ups_case2,
    "priority_cycle": priority_cycle,
}


# -- end-to-end runs ------------------------------------------------------

FIXTURE_CANDIDATES = ("lstf", "lstf:preemptive", "edf", "priority_o", "priority_cp", "omniscient",
                      "omniscient:preemptive")


def fixture_record(fx: Fixture) -> ScheduleRecord:
    """Record the scripted original schedule (omniscient hop vectors)."""
    return record(fx.network, fx.specs, "omniscient")


def schedule_table(fx: Fixture, arrivals, starts) -> dict[str, list[tuple]]:
    """Router -> [(packet, arrival, scheduled)] in fixture units, sorted by scheduling time.

    ``arrivals`` and ``starts`` map packet id to per-hop tick sequences.
    """
    out: dict[str, list[tuple]] = {}
    for r in fx.routers:
        node = fx.network.node(r)
        rows = []
        for name, pid in fx.pkt_ids.items():
            path = fx.specs[pid].path
            if node in path:
                h = path.index(node)
                rows.append((starts[pid][h], arrivals[pid][h], name))
        out[r] = [(n, fmt_units(a), fmt_units(s)) for s, a, n in sorted(rows)]
    return out


def _expected(table: dict[str, list[tuple]]) -> dict[str, list[tuple]]:
    return {r: [(p, fmt_units(units(a)), fmt_units(units(t))) for p, a, t in
                sorted(rows, key=lambda x: (units(x[2]), units(x[1]), x[0]))]
            for r, rows in table.items()}


def priority_orderings(fx: Fixture, rec: ScheduleRecord | None = None, preemptive: bool = False) -> list[dict]:
    """Replay under every strict static priority ordering of the fixture's packets."""
    rec = rec or fixture_record(fx)
    names = list(fx.pkt_ids)
    cand = "priority:preemptive" if preemptive else "priority"
    out = []
    for order in permutations(names):
        prios = {fx.pkt_ids[n]: rank for rank, n in enumerate(order)}
        rep = replay(rec, cand, priorities=prios)
        out.append({"order": "<".join(order), "overdue": sorted(fx.name_of(i) for i in rep.overdue_ids())})
    return out


def fixture_report(fx: Fixture, candidates=FIXTURE_CANDIDATES) -> dict:
    rec = fixture_record(fx)
    actual = schedule_table(fx, {i: r.arrivals for i, r in rec.packets.items()},
                            {i: r.sched for i, r in rec.packets.items()})
    expected = _expected(fx.original)
    rep = {
        "fixture": fx.name,
        "note": fx.note,
        "original": {"expected": expected, "actual": actual, "match": expected == actual},
        "outputs": {n: fmt_units(rec.packets[i].output) for n, i in fx.pkt_ids.items()},
        "candidates": {},
    }
    for cand in candidates:
        try:
            r = replay(rec, cand, keep_packets=True)
        except RecordError as exc:
            rep["candidates"][cand] = {"refused": str(exc)}
            continue
        table = schedule_table(fx, {i: p.arrivals for i, p in r.packets.items()},
                               {i: p.starts for i, p in r.packets.items()})
        rep["candidates"][cand] = {
            "overdue": sorted(fx.name_of(i) for i in r.overdue_ids()),
            "outputs": {n: fmt_units(r.packets[i].exit_time) for n, i in fx.pkt_ids.items()},
            "table": table,
        }
    if fx.lstf_replay is not None and "lstf" in rep["candidates"]:
        exp = _expected(fx.lstf_replay)
        act = rep["candidates"]["lstf"]["table"]
        rep["lstf_replay"] = {"expected": exp, "actual": act, "match": exp == act}
    if fx.name == "priority_cycle":
        rep["priority_orderings"] = priority_orderings(fx, rec)
    return rep
