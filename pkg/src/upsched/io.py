"""CSV / JSON-lines writers and readers for records, reports and tables."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

from .replay import PacketRecord, ReplayReport, ScheduleRecord

__all__ = [
    "write_record", "read_record_rows", "write_report_csv", "read_report_csv",
    "write_jsonl", "read_jsonl", "write_table_csv", "json_safe",
]

HOP_FIELDS = ("pkt_id", "flow_id", "hop", "node", "arrival", "sched_time")
PKT_FIELDS = ("pkt_id", "flow_id", "size_bits", "ingress", "output", "tmin", "path")
REPORT_FIELDS = ("pkt_id", "original", "replayed", "lateness", "overdue",
                 "orig_queueing", "replay_queueing", "queueing_ratio")


def json_safe(x):
    """Recursively replace non-finite floats so the output stays valid JSON."""
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    if isinstance(x, dict):
        return {str(k): json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [json_safe(v) for v in x]
    if hasattr(x, "item"):  # numpy scalar
        return json_safe(x.item())
    return x


def write_jsonl(rows: Iterable[dict], path: str | Path, append: bool = False) -> None:
    with open(path, "a" if append else "w") as fh:
        for row in rows:
            fh.write(json.dumps(json_safe(row), sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_table_csv(rows: Sequence[dict], path: str | Path) -> None:
    fields: list[str] = []
    for r in rows:
        for k in r:
            if k not in fields:
                fields.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else v) for k, v in json_safe(r).items()})


def write_record(rec: ScheduleRecord, stem: str | Path) -> tuple[Path, Path]:
    """Write ``<stem>_hops.csv`` (one row per packet-hop) and ``<stem>_packets.csv``."""
    stem = Path(stem)
    hops = stem.with_name(stem.name + "_hops.csv")
    pkts = stem.with_name(stem.name + "_packets.csv")
    with open(hops, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HOP_FIELDS)
        for pid in sorted(rec.packets):
            r = rec.packets[pid]
            for h, (node, a, s) in enumerate(zip(r.path, r.arrivals, r.sched)):
                w.writerow((pid, r.flow_id, h, node, a, s))
    with open(pkts, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PKT_FIELDS)
        for pid in sorted(rec.packets):
            r = rec.packets[pid]
            w.writerow((pid, r.flow_id, r.size, r.ingress, r.output, r.tmin_total,
                        " ".join(map(str, r.path))))
    return hops, pkts


def read_record_rows(stem: str | Path, network) -> dict[int, PacketRecord]:
    """Rebuild per-packet records from the two CSV files written by ``write_record``."""
    stem = Path(stem)
    hops: dict[int, list[tuple[int, int, int]]] = {}
    with open(stem.with_name(stem.name + "_hops.csv"), newline="") as fh:
        for row in csv.DictReader(fh):
            hops.setdefault(int(row["pkt_id"]), []).append(
                (int(row["hop"]), int(row["arrival"]), int(row["sched_time"])))
    out = {}
    with open(stem.with_name(stem.name + "_packets.csv"), newline="") as fh:
        for row in csv.DictReader(fh):
            pid = int(row["pkt_id"])
            path = tuple(int(x) for x in row["path"].split())
            size = int(row["size_bits"])
            tx, _, _ = network.timing(path, size)
            rows = sorted(hops[pid])
            out[pid] = PacketRecord(pid, int(row["flow_id"]), size, path, int(row["ingress"]),
                                    int(row["output"]), tuple(a for _, a, _ in rows),
                                    tuple(s for _, _, s in rows), tx, int(row["tmin"]))
    return out


def write_report_csv(rep: ReplayReport, path: str | Path) -> None:
    ratio = rep.queueing_ratio()
    late = rep.lateness
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for k in range(len(rep.pkt_ids)):
            q = float(ratio[k])
            w.writerow((int(rep.pkt_ids[k]), int(rep.original[k]), int(rep.replayed[k]), int(late[k]),
                        int(late[k] > 0), int(rep.orig_queueing[k]), int(rep.replay_queueing[k]),
                        repr(q) if math.isfinite(q) else "inf"))


def read_report_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = []
        for row in csv.DictReader(fh):
            rows.append({k: (float(v) if k == "queueing_ratio" else int(v)) for k, v in row.items()})
        return rows
