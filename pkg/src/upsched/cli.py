"""Command-line entry point: ``upsched {replay,objective,fixture,sweep,preset}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import io
from .experiments import PRESETS, ScenarioConfig, run_objective, run_replay, run_sweep
from .fixtures import FIXTURES, fixture_report

log = logging.getLogger("upsched")

_FIXTURE_GROUPS = {"no_ups": ["no_ups_case1", "no_ups_case2"]}


def _csv_list(s: str | None) -> list[str] | None:
    if s is None:
        return None
    return [x.strip() for x in s.split(",") if x.strip()]


def _load(args) -> ScenarioConfig:
    if args.scenario:
        cfg = ScenarioConfig.load(args.scenario)
    else:
        cfg = PRESETS[args.preset]()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.horizon is not None:
        cfg = replace(cfg, traffic=replace(cfg.traffic, horizon=args.horizon))
        if cfg.horizon is not None:
            cfg = replace(cfg, horizon=args.horizon)
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_rows(rows: list[dict], keys: list[str]) -> None:
    widths = [max(len(k), *(len(_fmt(r.get(k))) for r in rows)) for k in keys]
    print("  ".join(k.ljust(w) for k, w in zip(keys, widths)))
    for r in rows:
        print("  ".join(_fmt(r.get(k)).ljust(w) for k, w in zip(keys, widths)))


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def cmd_replay(args) -> int:
    cfg = _load(args)
    if args.original:
        cfg = replace(cfg, original=args.original)
    run = run_replay(cfg, _csv_list(args.candidates), threads=args.threads)
    out = _out_dir(args)
    io.write_jsonl(run.rows, out / "summary.jsonl")
    if args.per_packet or cfg.per_packet_csv:
        io.write_record(run.record, out / "record")
        for rep in run.reports:
            io.write_report_csv(rep, out / f"report_{_safe(rep.candidate)}.csv")
    _print_rows(run.rows, ["candidate", "packets", "overdue", "frac_overdue", "frac_overdue_gt_T", "T",
                           "median_queueing_ratio"])
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    utils = [float(u) for u in _csv_list(args.utilizations)] if args.utilizations else None
    rows = run_sweep(cfg, utils, _csv_list(args.candidates), threads=args.threads)
    out = _out_dir(args)
    io.write_jsonl(rows, out / "summary.jsonl")
    _print_rows(rows, ["target_utilization", "measured_utilization", "candidate", "frac_overdue",
                       "frac_overdue_gt_T"])
    return 0


def _parse_policy(s: str | None) -> dict:
    if not s:
        return {}
    out = {}
    for item in _csv_list(s):
        k, _, v = item.partition("=")
        out[k] = float(v) if "." in v or "e" in v.lower() else int(v)
    return out


def cmd_objective(args) -> int:
    cfg = _load(args)
    if args.policy:
        cfg = replace(cfg, policy={**cfg.policy, **_parse_policy(args.policy)})
    run = run_objective(cfg, _csv_list(args.candidates), threads=args.threads)
    out = _out_dir(args)
    io.write_jsonl(run.rows, out / "summary.jsonl")
    for name, rows in run.tables.items():
        io.write_table_csv(rows, out / f"{name}.csv")
    keys = [k for k in run.rows[0] if k not in ("scenario", "objective", "seed")] if run.rows else []
    _print_rows(run.rows, keys)
    return 0


def _print_table(title: str, table: dict) -> None:
    print(f"  {title}")
    for router, rows in table.items():
        cells = ", ".join(f"{p}({a}, {s})" for p, a, s in rows)
        print(f"    {router}: {cells}")


def cmd_fixture(args) -> int:
    names = _FIXTURE_GROUPS.get(args.name, [args.name])
    if args.name == "all":
        names = list(FIXTURES)
    reports = []
    for name in names:
        if name not in FIXTURES:
            print(f"unknown fixture {name!r}; choose from {', '.join(FIXTURES)}, no_ups, all",
                  file=sys.stderr)
            return 2
        rep = fixture_report(FIXTURES[name]())
        reports.append(rep)
        print(f"== {name}: {rep['note']}")
        print(f"  original matches expected: {rep['original']['match']}")
        _print_table("expected original", rep["original"]["expected"])
        _print_table("recorded original", rep["original"]["actual"])
        print("  outputs o(p): " + ", ".join(f"{k}={v}" for k, v in rep["outputs"].items()))
        for cand, res in rep["candidates"].items():
            if "refused" in res:
                print(f"  {cand}: refused ({res['refused']})")
                continue
            status = "PASS" if not res["overdue"] else "FAIL overdue=" + ",".join(res["overdue"])
            print(f"  {cand}: {status}")
        if "lstf_replay" in rep:
            lr = rep["lstf_replay"]
            print(f"  lstf replay matches expected table: {lr['match']}")
            _print_table("expected lstf replay", lr["expected"])
            _print_table("actual lstf replay", lr["actual"])
        if "priority_orderings" in rep:
            print("  static priority orderings:")
            for row in rep["priority_orderings"]:
                print(f"    {row['order']}: overdue={','.join(row['overdue']) or '-'}")
    if args.out:
        out = _out_dir(args)
        io.write_jsonl(reports, out / "fixtures.jsonl")
    return 0


def cmd_preset(args) -> int:
    print(PRESETS[args.name]().dumps())
    return 0


def _safe(tag: str) -> str:
    return tag.replace(":", "_").replace("/", "_").replace("+", "plus")


def _add_common(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--scenario", help="scenario JSON file")
    src.add_argument("--preset", default="backbone", choices=sorted(PRESETS),
                     help="built-in scenario (default: backbone)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--horizon", type=int, help="traffic window in ns (and run end for long-lived flows)")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--candidates", help="comma-separated schedulers to run")
    p.add_argument("--threads", type=int, help="worker processes (capped by UPSCHED_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="upsched", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("replay", help="record an original schedule and replay it")
    _add_common(p)
    p.add_argument("--original", help="original scheduler tag")
    p.add_argument("--per-packet", action="store_true", help="also write per-packet CSVs")
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("objective", help="compare schedulers on an FCT / tail / fairness objective")
    _add_common(p)
    p.add_argument("--policy", help="slack policy parameters, e.g. D=1000000000 or r_est=8e8")
    p.set_defaults(fn=cmd_objective, preset="fct")

    p = sub.add_parser("sweep", help="replay across utilization levels")
    _add_common(p)
    p.add_argument("--utilizations", help="comma-separated target utilizations")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("fixture", help="run a hand-built counterexample and print its tables")
    p.add_argument("name", help="lstf_three_hop, no_ups, no_ups_case1, no_ups_case2, priority_cycle or all")
    p.add_argument("--out", help="also write fixtures.jsonl here")
    p.set_defaults(fn=cmd_fixture)

    p = sub.add_parser("preset", help="print a built-in scenario as JSON")
    p.add_argument("name", choices=sorted(PRESETS))
    p.set_defaults(fn=cmd_preset)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"upsched: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
