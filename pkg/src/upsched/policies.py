"""Slack initialization heuristics and the objective metrics they target."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .network import ContractError, Packet, TICKS_PER_SECOND

__all__ = [
    "SLACK_MAX", "ONE_SECOND", "slack_fct", "slack_uniform", "FairPolicy", "slack_fair",
    "jain_index", "jain_series", "fct_buckets", "delay_percentiles", "time_to_index",
    "FctStamp", "UniformStamp", "FairStamp", "DEFAULT_FCT_EDGES",
]

log = logging.getLogger(__name__)

SLACK_MAX = (1 << 63) - 1
ONE_SECOND = TICKS_PER_SECOND


def slack_fct(flow_size: int, D: int = ONE_SECOND, *, mss: int = 1500) -> int:
    """Slack proportional to flow size, with size counted in whole MSS units."""
    if D <= 0:
        raise ValueError("D must be positive")
    units = max(1, -(-flow_size // mss))
    v = units * D
    if v > SLACK_MAX:
        log.warning("flow-size slack overflow for %d bytes; saturating", flow_size)
        return SLACK_MAX
    return v


def slack_uniform(C: int = ONE_SECOND) -> int:
    return C


@dataclass
class FairPolicy:
    """Per-flow ingress state for rate-based fair slack.

    Each packet's slack is the previous packet's slack plus its own
    transmission time at ``r_est``, minus the gap since the previous
    arrival, floored at zero.
    """

    r_est: float
    overrides: dict[int, float] = field(default_factory=dict)
    _last: dict[int, tuple[int, int]] = field(default_factory=dict, repr=False)

    def rate(self, flow_id: int) -> float:
        return self.overrides.get(flow_id, self.r_est)

    def slack(self, flow_id: int, now: int, size_bits: int) -> int:
        prev = self._last.get(flow_id)
        if prev is None:
            s = 0
        else:
            last_slack, last_t = prev
            if now < last_t:
                raise ContractError(f"flow {flow_id}: arrival at {now} precedes {last_t}")
            per_pkt = math.ceil(size_bits * TICKS_PER_SECOND / self.rate(flow_id))
            s = max(0, last_slack + per_pkt - (now - last_t))
        self._last[flow_id] = (s, now)
        return s


def slack_fair(policy: FairPolicy, flow_id: int, i_p: int, size_bits: int) -> int:
    return policy.slack(flow_id, i_p, size_bits)


# Stamps used by the transport to set headers at injection.

@dataclass(frozen=True)
class FctStamp:
    D: int = ONE_SECOND

    def __call__(self, p: Packet, flow, now: int) -> None:
        if flow.size is None:
            p.slack = SLACK_MAX
        else:
            p.slack = slack_fct(flow.size, self.D, mss=flow.transport.mss)


@dataclass(frozen=True)
class UniformStamp:
    C: int = ONE_SECOND

    def __call__(self, p: Packet, flow, now: int) -> None:
        p.slack = slack_uniform(self.C)


class FairStamp:
    def __init__(self, policy: FairPolicy):
        self.policy = policy

    def __call__(self, p: Packet, flow, now: int) -> None:
        p.slack = self.policy.slack(p.flow_id, now, p.size)


# -- metrics --------------------------------------------------------------

def jain_index(throughputs: Sequence[float]) -> float | None:
    x = np.asarray(throughputs, dtype=float)
    if x.size == 0:
        raise ValueError("jain_index needs at least one throughput")
    if (x < 0).any():
        raise ValueError("throughputs must be non-negative")
    sq = float((x * x).sum())
    if sq == 0:
        return None
    return float(x.sum() ** 2 / (x.size * sq))


def jain_series(delivered: np.ndarray, flow_ids: Sequence[int], window: int, horizon: int) -> list:
    """Jain index per ``window`` ticks over delivered (flow_id, exit_time, bits, ...) rows."""
    n_win = -(-horizon // window)
    col = {f: i for i, f in enumerate(flow_ids)}
    tput = np.zeros((n_win, len(flow_ids)))
    for row in delivered:
        fid, t, bits = int(row[0]), int(row[1]), int(row[2])
        if fid in col and t < horizon:
            tput[t // window, col[fid]] += bits
    return [jain_index(tput[w]) for w in range(n_win)]


def time_to_index(series: Sequence[float | None], window: int, x: float) -> int | None:
    """Start of the first window from which the index stays >= ``x`` to the end."""
    start = None
    for w, v in enumerate(series):
        if v is not None and v >= x:
            if start is None:
                start = w
        else:
            start = None
    return None if start is None else start * window


DEFAULT_FCT_EDGES = (0, 10_000, 100_000, 1_000_000, 10_000_000, float("inf"))


def fct_buckets(sizes: Sequence[int], fcts: Sequence[int | None],
                edges: Sequence[float] = DEFAULT_FCT_EDGES) -> list[dict]:
    """Mean FCT per flow-size bucket ``[lo, hi)``; empty buckets report None."""
    out = []
    pairs = [(s, f) for s, f in zip(sizes, fcts) if f is not None]
    for lo, hi in zip(edges, edges[1:]):
        vals = [f for s, f in pairs if lo <= s < hi]
        out.append({"lo": lo, "hi": hi, "flows": len(vals),
                    "mean_fct": float(np.mean(vals)) if vals else None})
    return out


def delay_percentiles(delays: Sequence[int], q: float = 99.0) -> tuple[float | None, float | None]:
    d = np.asarray(delays, dtype=float)
    if d.size == 0:
        return None, None
    return float(d.mean()), float(np.percentile(d, q, method="higher"))
