"""Slowdown, bounded slowdown, utilisation and grouped summaries."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .ckpt import CKPT, READ, REDO, OverheadLedger
from .machine import MIRA, MachineConfig
from .workload import Job, JobOutcome, categorize

SCHEMA_VERSION = 1
BSD_BOUND = 600.0


def slowdown(outcome: JobOutcome, job: Job) -> float:
    return (outcome.end_time - job.submit_time) / job.runtime


def bounded_slowdown(outcome: JobOutcome, job: Job, bound: float = BSD_BOUND) -> float:
    wait = outcome.end_time - job.submit_time - job.runtime
    floor = max(job.runtime, bound)
    return (wait + floor) / floor


@dataclass(frozen=True)
class JobRow:
    id: int
    kind: str
    category: str
    wait: float
    turnaround: float
    sd: float
    bsd: float


def job_rows(outcomes: Iterable[JobOutcome], jobs: Sequence[Job], cfg: MachineConfig = MIRA) -> list[JobRow]:
    by_id = {j.id: j for j in jobs}
    rows = []
    for o in outcomes:
        j = by_id.get(o.job_id)
        if j is None:
            continue
        turnaround = o.end_time - j.submit_time
        rows.append(JobRow(j.id, j.kind.value, categorize(j, cfg).value, turnaround - j.runtime,
                           turnaround, slowdown(o, j), bounded_slowdown(o, j)))
    rows.sort(key=lambda r: r.id)
    return rows


def nearest_rank(sorted_values: Sequence[float], p: float) -> float:
    """Nearest-rank quantile of already sorted data."""
    n = len(sorted_values)
    if n == 0:
        raise ValueError("quantile of empty data")
    rank = max(1, math.ceil(p * n - 1e-12))
    return sorted_values[min(rank, n) - 1]


QUANTILES = {"p5": 0.05, "p25": 0.25, "median": 0.50, "p75": 0.75, "p95": 0.95}


def summarize(values: Sequence[float]) -> dict[str, float]:
    s = sorted(values)
    out = {"count": len(s), "mean": math.fsum(s) / len(s)}
    for name, p in QUANTILES.items():
        out[name] = nearest_rank(s, p)
    return out


@dataclass
class Utilization:
    overall: float = 0.0
    productive: float = 0.0
    ckpt_overhead: float = 0.0
    preempt_overhead: float = 0.0


def _clip(t0, t1, lo, hi):
    return max(0.0, min(t1, hi) - max(t0, lo))


def utilization(outcomes: Iterable[JobOutcome], ledger: OverheadLedger | None, machine: MachineConfig,
                window: tuple[float, float] | None = None, nodes_of=None) -> Utilization:
    """Machine utilisation over ``window`` from the executed spans.

    Overall counts every busy core-second; the overhead fractions come from
    the ledger when the window spans the whole run and from the clipped spans
    otherwise.  ``nodes_of`` maps a job id to its charged node count (defaults
    to the placement size).
    """
    outcomes = list(outcomes)
    if window is None:
        spans = [s for o in outcomes for seg in o.segments for s in seg.spans]
        if not spans:
            return Utilization()
        window = (min(s.t0 for s in spans), max(s.t1 for s in spans))
        whole = True
    else:
        whole = False
    lo, hi = window
    if hi <= lo:
        raise ValueError("empty utilisation window")
    cap = machine.total_nodes * (hi - lo)
    busy = ck = pre = 0.0
    for o in outcomes:
        for seg in o.segments:
            n = nodes_of(o.job_id) if nodes_of else seg.placement.size_blocks * machine.block_size
            for s in seg.spans:
                d = _clip(s.t0, s.t1, lo, hi) * n
                busy += d
                if s.kind == CKPT:
                    ck += d
                elif s.kind in (READ, REDO):
                    pre += d
    if whole and ledger is not None:
        ck = (ledger.chr_sys_ckpt + ledger.job_ckpt_total) * 3600.0
        pre = ledger.chr_sys_pre * 3600.0
    overall = busy / cap
    return Utilization(overall, overall - (ck + pre) / cap, ck / cap, pre / cap)


@dataclass
class MetricsReport:
    rows: list[JobRow]
    groups: dict[str, dict[str, dict[str, float]]] = field(default_factory=dict)
    utilization: Utilization | None = None
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "meta": self.meta,
            "utilization": asdict(self.utilization) if self.utilization else None,
            "groups": self.groups,
            "jobs": [asdict(r) for r in self.rows],
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["group", "metric", "statistic", "value"])
        for g in sorted(self.groups):
            for metric in sorted(self.groups[g]):
                for stat, v in self.groups[g][metric].items():
                    w.writerow([g, metric, stat, repr(float(v))])
        return buf.getvalue()


def aggregate(rows: Sequence[JobRow], grouping: str = "kind_category") -> MetricsReport:
    """Summaries of sd, bsd and turnaround per group.

    Groups are ``kind/category``, ``kind/all`` and ``all/all``; with grouping
    ``kind`` the per-category breakdown is left out.  Empty groups are omitted.
    """
    buckets: dict[str, list[JobRow]] = {}
    for r in rows:
        keys = [f"{r.kind}/all", "all/all"]
        if grouping == "kind_category":
            keys.append(f"{r.kind}/{r.category}")
        for k in keys:
            buckets.setdefault(k, []).append(r)
    groups = {}
    for k in sorted(buckets):
        rs = buckets[k]
        groups[k] = {m: summarize([getattr(r, m) for r in rs]) for m in ("sd", "bsd", "turnaround")}
    return MetricsReport(list(rows), groups)


def mean(values: Iterable[float]) -> float:
    v = list(values)
    return math.fsum(v) / len(v) if v else float("nan")
