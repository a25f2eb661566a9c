"""Jobs, trace ingestion, categorisation and real-time job selection."""

from __future__ import annotations

import csv
import enum
import gzip
import io
import logging
import math
import random
from dataclasses import dataclass, field, replace
from typing import BinaryIO, Iterable, Sequence

from .machine import MIRA, MachineConfig, PartitionPlacement, round_to_partition

log = logging.getLogger(__name__)

SHORT_RUNTIME_LIMIT = 7200.0
NARROW_NODE_LIMIT = 4096
WALLTIME90_LIMIT = 5400.0


class Kind(str, enum.Enum):
    REAL_TIME = "rt"
    BATCH = "batch"


class Category(str, enum.Enum):
    NARROW_SHORT = "narrow_short"
    NARROW_LONG = "narrow_long"
    WIDE_SHORT = "wide_short"
    WIDE_LONG = "wide_long"


CATEGORIES = tuple(Category)


class TraceParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class EmptyTraceError(ValueError):
    pass


class InsufficientJobsError(ValueError):
    pass


@dataclass(frozen=True)
class Job:
    id: int
    submit_time: float
    walltime: float
    runtime: float
    nodes: int
    kind: Kind = Kind.BATCH

    def __post_init__(self):
        if not 0 < self.runtime <= self.walltime:
            raise ValueError(f"job {self.id}: need 0 < runtime <= walltime")
        if self.nodes < 1:
            raise ValueError(f"job {self.id}: nodes must be >= 1")
        if self.submit_time < 0:
            raise ValueError(f"job {self.id}: negative submit time")

    @property
    def is_rtj(self) -> bool:
        return self.kind is Kind.REAL_TIME

    def partition_size(self, cfg: MachineConfig = MIRA) -> int:
        return round_to_partition(self.nodes, cfg)

    def category(self, cfg: MachineConfig = MIRA) -> Category:
        return categorize(self, cfg)


@dataclass
class Segment:
    placement: PartitionPlacement
    start: float
    end: float
    spans: tuple = ()  # ckpt.Span records covering [start, end]


@dataclass
class JobOutcome:
    job_id: int
    start_time: float
    end_time: float
    restart_times: list[float] = field(default_factory=list)
    preempt_count: int = 0
    ckpt_time_total: float = 0.0
    preempt_overhead_total: float = 0.0
    segments: list[Segment] = field(default_factory=list)


def categorize(job: Job, cfg: MachineConfig = MIRA) -> Category:
    narrow = round_to_partition(job.nodes, cfg) <= NARROW_NODE_LIMIT
    short = job.runtime <= SHORT_RUNTIME_LIMIT
    if narrow:
        return Category.NARROW_SHORT if short else Category.NARROW_LONG
    return Category.WIDE_SHORT if short else Category.WIDE_LONG


# ---------------------------------------------------------------- parsing

def _open_text(source) -> io.TextIOBase:
    if isinstance(source, (bytes, bytearray)):
        raw = bytes(source)
    elif isinstance(source, str):
        with open(source, "rb") as fh:
            raw = fh.read()
    else:
        raw = source.read()
        if isinstance(raw, str):
            return io.StringIO(raw)
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return io.StringIO(raw.decode("utf-8"))


def parse_trace(source: BinaryIO | bytes | str, fmt: str = "swf", *, procs_per_node: int = 1,
                diagnostics: list[str] | None = None) -> list[Job]:
    """Read an SWF or CSV trace into jobs sorted by submit time.

    ``source`` is a path, raw bytes or a binary stream; gzip input is detected
    from its magic bytes.  SWF records lacking a runtime or processor count are
    skipped and described in ``diagnostics``.  ``procs_per_node`` converts SWF
    processor counts to nodes.
    """
    text = _open_text(source)
    fmt = fmt.lower()
    if fmt == "swf":
        jobs = _parse_swf(text, procs_per_node, diagnostics)
    elif fmt == "csv":
        jobs = _parse_csv(text)
    else:
        raise ValueError(f"unknown trace format {fmt!r}")
    if not jobs:
        raise EmptyTraceError("trace contains no usable jobs")
    jobs.sort(key=lambda j: (j.submit_time, j.id))
    return jobs


def _num(tok: str, lineno: int, what: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise TraceParseError(lineno, f"bad {what} {tok!r}") from None


def _parse_swf(text, procs_per_node, diagnostics) -> list[Job]:
    jobs = []
    for lineno, line in enumerate(text, 1):
        line = line.strip()
        if not line or line.startswith(";"):
            continue
        f = line.split()
        if len(f) < 9:
            raise TraceParseError(lineno, f"expected 18 fields, got {len(f)}")
        job_id = int(_num(f[0], lineno, "job id"))
        submit = _num(f[1], lineno, "submit time")
        run = _num(f[3], lineno, "run time")
        procs = _num(f[7], lineno, "processor count")
        req_time = _num(f[8], lineno, "requested time")
        if run <= 0 or procs <= 0:
            msg = f"line {lineno}: job {job_id} skipped (missing runtime or processor count)"
            log.debug(msg)
            if diagnostics is not None:
                diagnostics.append(msg)
            continue
        nodes = max(1, math.ceil(procs / procs_per_node))
        # traces record jobs outliving their request; keep runtime <= walltime
        walltime = max(req_time, run)
        jobs.append(Job(job_id, max(submit, 0.0), walltime, run, nodes))
    return jobs


def _parse_csv(text) -> list[Job]:
    reader = csv.DictReader(text)
    expected = {"id", "submit", "walltime", "runtime", "nodes", "kind"}
    if reader.fieldnames is None or not expected <= set(reader.fieldnames):
        raise TraceParseError(1, f"CSV header must contain {sorted(expected)}")
    jobs = []
    for row in reader:
        lineno = reader.line_num
        try:
            kind = Kind.REAL_TIME if row["kind"].strip().lower() in ("rt", "realtime", "real_time") else Kind.BATCH
            nodes = _num(row["nodes"], lineno, "node count")
            if nodes != int(nodes):
                raise TraceParseError(lineno, f"bad node count {row['nodes']!r}")
            jobs.append(Job(
                int(_num(row["id"], lineno, "id")),
                _num(row["submit"], lineno, "submit"),
                _num(row["walltime"], lineno, "walltime"),
                _num(row["runtime"], lineno, "runtime"),
                int(nodes),
                kind,
            ))
        except TraceParseError:
            raise
        except (ValueError, AttributeError) as exc:
            raise TraceParseError(lineno, str(exc)) from None
    return jobs


def write_csv(jobs: Iterable[Job], sink) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(["id", "submit", "walltime", "runtime", "nodes", "kind"])
    for j in jobs:
        w.writerow([j.id, _fmt(j.submit_time), _fmt(j.walltime), _fmt(j.runtime), j.nodes, j.kind.value])


def _fmt(x: float):
    return int(x) if float(x).is_integer() else repr(float(x))


# ---------------------------------------------------------------- transforms

def normalize_sizes(jobs: Sequence[Job], source_nodes: int, target: MachineConfig = MIRA) -> list[Job]:
    if source_nodes <= 0:
        raise ValueError("source_nodes must be positive")
    out = []
    for j in jobs:
        n = -(-j.nodes * target.total_nodes // source_nodes)  # exact integer ceil
        out.append(replace(j, nodes=min(max(n, 1), target.total_nodes)))
    return out


def _rtj_count(n: int, r_percent: float) -> int:
    # round half up
    return int(math.floor(n * r_percent / 100.0 + 0.5))


def select_rtjs(jobs: Sequence[Job], method: str = "default", r_percent: float = 10.0, seed: int = 0,
                external: Sequence[Job] | None = None) -> list[Job]:
    """Mark a seeded sample of jobs as real-time.

    ``default`` samples uniformly from all jobs, ``walltime90`` only from jobs
    running under 90 minutes, and ``external`` leaves the trace batch-only and
    injects jobs drawn from ``external`` with submit times spread uniformly over
    the trace span.
    """
    if not 0 <= r_percent < 100:
        raise ValueError("r_percent must lie in [0, 100)")
    rng = random.Random(seed)
    base = [replace(j, kind=Kind.BATCH) for j in jobs]
    count = _rtj_count(len(base), r_percent)
    method = method.lower()
    if method in ("default", "walltime90"):
        pool = range(len(base))
        if method == "walltime90":
            pool = [i for i in pool if base[i].runtime < WALLTIME90_LIMIT]
        if count > len(pool):
            raise InsufficientJobsError(f"need {count} eligible jobs, found {len(pool)}")
        for i in rng.sample(list(pool), count):
            base[i] = replace(base[i], kind=Kind.REAL_TIME)
        return base
    if method == "external":
        if not external:
            raise InsufficientJobsError("external method needs a non-empty external job list")
        lo = min((j.submit_time for j in base), default=0.0)
        hi = max((j.submit_time for j in base), default=0.0)
        next_id = max((j.id for j in base), default=0) + 1
        for k in range(count):
            src = external[rng.randrange(len(external))]
            base.append(replace(src, id=next_id + k, submit_time=rng.uniform(lo, hi), kind=Kind.REAL_TIME))
        base.sort(key=lambda j: (j.submit_time, j.id))
        return base
    raise ValueError(f"unknown RTJ selection method {method!r}")


def middle_window(outcomes, jobs: Sequence[Job], window: tuple[float, float]):
    """Keep outcomes and jobs whose submit time lies in ``[lo, hi)``."""
    lo, hi = window
    keep = {j.id for j in jobs if lo <= j.submit_time < hi}
    return [o for o in outcomes if o.job_id in keep], [j for j in jobs if j.id in keep]


# ---------------------------------------------------------------- synthetic traces

def synthetic_trace(n_jobs: int, load: float, cfg: MachineConfig = MIRA, seed: int = 0,
                    sizes: Sequence[int] | None = None, runtime_range=(600.0, 6 * 3600.0),
                    walltime_slack=(1.0, 2.0)) -> list[Job]:
    """Random batch trace whose offered load is close to ``load``.

    Sizes are drawn log-uniformly from ``sizes`` (default: every legal size up
    to half the machine), runtimes log-uniformly from ``runtime_range``, and
    arrivals are Poisson with a rate chosen so that total work over the
    arrival span equals ``load`` times machine capacity.
    """
    rng = random.Random(seed)
    if sizes is None:
        sizes = [s for s in cfg.legal_partition_sizes if s <= cfg.total_nodes // 2]
    weights = [1.0 / (i + 1) for i in range(len(sizes))]
    lo, hi = (math.log(x) for x in runtime_range)
    specs = []
    for _ in range(n_jobs):
        size = rng.choices(sizes, weights)[0]
        rt = round(math.exp(rng.uniform(lo, hi)))
        wt = round(rt * rng.uniform(*walltime_slack))
        specs.append((size, rt, max(wt, rt)))
    work = sum(s * rt for s, rt, _ in specs)
    span = work / (load * cfg.total_nodes)
    rate = n_jobs / span
    t = 0.0
    jobs = []
    for i, (size, rt, wt) in enumerate(specs):
        jobs.append(Job(i + 1, round(t), wt, rt, size))
        t += rng.expovariate(rate)
    return jobs
