"""Checkpoint/preemption schemes and overhead arithmetic.

A running segment of a job is described by a list of typed spans (restart
read, compute, checkpoint write).  Cutting a segment at a preemption turns the
compute performed since the last completed checkpoint into redo.  Every busy
core-second therefore lands in exactly one bucket, which is what keeps the
utilisation identity exact.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .machine import MIRA, MachineConfig

EPS = 1e-9


class Variant(str, enum.Enum):
    NO = "no"
    SYS = "sys"
    APP = "app"
    JIT = "jit"


class BandwidthModel(str, enum.Enum):
    PFS_CAP = "pfs_cap"
    PER_NODE_MIN = "per_node_min"


@dataclass(frozen=True)
class CkptScheme:
    variant: Variant = Variant.NO
    sys_interval: float = 1800.0
    app_percent: float = 0.05
    # checkpoint every fraction x walltime instead of the overhead budget rule
    app_interval_fraction: float | None = None
    dsize_per_node: float = 4.0
    bandwidth_model: BandwidthModel = BandwidthModel.PER_NODE_MIN

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "bandwidth_model", BandwidthModel(self.bandwidth_model))
        if self.sys_interval <= 0:
            raise ValueError("sys_interval must be positive")
        if not 0 < self.app_percent < 1:
            raise ValueError("app_percent must lie in (0, 1)")
        if self.app_interval_fraction is not None and not 0 < self.app_interval_fraction < 1:
            raise ValueError("app_interval_fraction must lie in (0, 1)")
        if self.dsize_per_node < 0:
            raise ValueError("dsize_per_node must be non-negative")

    @classmethod
    def no(cls, **kw):
        return cls(Variant.NO, **kw)

    @classmethod
    def sys(cls, interval: float = 1800.0, **kw):
        return cls(Variant.SYS, sys_interval=interval, **kw)

    @classmethod
    def app(cls, percent: float = 0.05, **kw):
        return cls(Variant.APP, app_percent=percent, **kw)

    @classmethod
    def jit(cls, **kw):
        return cls(Variant.JIT, **kw)

    def label(self) -> str:
        if self.variant is Variant.SYS:
            return f"sys{self.sys_interval:g}"
        if self.variant is Variant.APP:
            if self.app_interval_fraction is not None:
                return f"app@{self.app_interval_fraction:g}"
            return f"app{self.app_percent * 100:g}"
        return self.variant.value


def validate_scheme(scheme: CkptScheme, cfg: MachineConfig) -> None:
    if scheme.dsize_per_node > cfg.mem_per_node:
        raise ValueError("dsize_per_node exceeds node memory")


def bandwidth(nodes: int, scheme: CkptScheme, cfg: MachineConfig = MIRA) -> float:
    """Checkpoint I/O bandwidth in GB/s seen by a job on ``nodes`` nodes."""
    if scheme.bandwidth_model is BandwidthModel.PFS_CAP:
        return min(nodes / cfg.io_node_ratio * cfg.io_node_bandwidth, cfg.pfs_cap)
    return min(nodes * cfg.per_node_io_bandwidth, cfg.pfs_cap)


def write_time(nodes: int, scheme: CkptScheme, cfg: MachineConfig = MIRA) -> float:
    if nodes < 1:
        raise ValueError("nodes must be >= 1")
    data = scheme.dsize_per_node * nodes
    if data == 0:
        return 0.0
    return data / bandwidth(nodes, scheme, cfg)


# one bandwidth figure serves both directions
read_time = write_time


def ovhd_formulation(nodes: int, cfg: MachineConfig = MIRA) -> float:
    """Checkpoint-or-restart time of a full-memory image, as the offline model charges it."""
    return cfg.mem_per_node * nodes / min(nodes / cfg.io_node_ratio * cfg.io_node_bandwidth, cfg.pfs_cap)


def plan_app_checkpoints(walltime: float, ckpt_write: float, percent: float) -> tuple[int, float]:
    """Number of evenly spaced checkpoints fitting the overhead budget, and their spacing."""
    if walltime <= 0 or ckpt_write < 0:
        raise ValueError("need walltime > 0 and ckpt_write >= 0")
    count = 0 if ckpt_write == 0 else math.floor(percent * walltime / ckpt_write + EPS)
    return count, walltime / (count + 1)


def checkpoint_positions(walltime: float, runtime: float, nodes: int, scheme: CkptScheme,
                         cfg: MachineConfig = MIRA) -> list[float]:
    """Accumulated-runtime marks at which periodic checkpoints are written.

    Marks lie strictly before ``runtime``: a job that is about to finish has
    nothing to protect.
    """
    if scheme.variant is Variant.SYS:
        interval, limit = scheme.sys_interval, math.inf
    elif scheme.variant is Variant.APP:
        if scheme.app_interval_fraction is not None:
            interval, limit = scheme.app_interval_fraction * walltime, math.inf
        else:
            limit, interval = plan_app_checkpoints(walltime, write_time(nodes, scheme, cfg), scheme.app_percent)
    else:
        return []
    marks = []
    k = 1
    while k <= limit and k * interval < runtime - EPS:
        marks.append(k * interval)
        k += 1
    return marks


# ---------------------------------------------------------------- segment timelines

READ, COMPUTE, CKPT, REDO = "read", "compute", "ckpt", "redo"


@dataclass(frozen=True)
class Span:
    kind: str
    t0: float
    t1: float
    p0: float  # accumulated progress at t0
    p1: float

    @property
    def length(self) -> float:
        return self.t1 - self.t0


def plan_segment(start: float, progress0: float, runtime: float, read: float, marks: list[float],
                 write: float) -> list[Span]:
    """Spans of an uninterrupted segment that resumes at ``progress0``."""
    spans = []
    t, p = start, progress0
    if read > 0:
        spans.append(Span(READ, t, t + read, p, p))
        t += read
    for m in marks:
        if m <= p + EPS:
            continue
        spans.append(Span(COMPUTE, t, t + (m - p), p, m))
        t, p = t + (m - p), m
        if write > 0:
            spans.append(Span(CKPT, t, t + write, p, p))
            t += write
    spans.append(Span(COMPUTE, t, t + (runtime - p), p, runtime))
    return spans


@dataclass(frozen=True)
class CutResult:
    spans: list[Span]  # truncated spans with lost compute relabelled REDO
    progress: float  # progress reached at the cut
    saved: float  # progress that survives the preemption
    redo: float


def progress_at(spans: list[Span], t: float) -> float:
    p = spans[0].p0 if spans else 0.0
    for s in spans:
        if s.t0 >= t:
            break
        if s.kind == COMPUTE:
            p = s.p0 + (min(t, s.t1) - s.t0)
        else:
            p = s.p1
    return p


def last_checkpoint_at(spans: list[Span], t: float, initial: float) -> float:
    saved = initial
    for s in spans:
        if s.kind == CKPT and s.t1 <= t + EPS:
            saved = s.p1
    return saved


def cut_segment(spans: list[Span], t: float, variant: Variant, initial_saved: float) -> CutResult:
    """Truncate a segment at time ``t`` and relabel the compute lost to preemption.

    ``initial_saved`` is the checkpointed progress the segment resumed from.
    """
    kept = []
    for s in spans:
        if s.t1 <= t + EPS:
            kept.append(s)
            continue
        if s.t0 < t - EPS:
            if s.kind == COMPUTE:
                kept.append(Span(COMPUTE, s.t0, t, s.p0, s.p0 + (t - s.t0)))
            else:
                # an unfinished read or write saves nothing
                kept.append(Span(s.kind, s.t0, t, s.p0, s.p0))
        break
    progress = kept[-1].p1 if kept else initial_saved
    if variant is Variant.JIT:
        saved = progress
    elif variant is Variant.NO:
        saved = 0.0
    else:
        saved = last_checkpoint_at(spans, t, initial_saved)
    out, redo = [], 0.0
    for s in kept:
        if s.kind == COMPUTE and s.p1 > saved + EPS:
            lo = max(s.p0, saved)
            split_t = s.t0 + (lo - s.p0)
            if split_t > s.t0 + EPS:
                out.append(Span(COMPUTE, s.t0, split_t, s.p0, lo))
            out.append(Span(REDO, split_t, s.t1, lo, s.p1))
            redo += s.t1 - split_t
        else:
            out.append(s)
    return CutResult(out, progress, saved, redo)


# ---------------------------------------------------------------- preemption losses

@dataclass(frozen=True)
class PreemptLoss:
    redo: float
    restart_read: float
    rtj_wait: float


def preempt_loss(nodes: int, progress: float, last_ckpt: float, segment_progress: float,
                 scheme: CkptScheme, cfg: MachineConfig = MIRA) -> PreemptLoss:
    """Time lost by a running job preempted with the given progress.

    ``last_ckpt`` is the accumulated runtime preserved by the latest completed
    checkpoint and ``segment_progress`` the runtime executed in the current
    segment.
    """
    v = scheme.variant
    if v is Variant.NO:
        return PreemptLoss(segment_progress, 0.0, 0.0)
    if v is Variant.JIT:
        w = write_time(nodes, scheme, cfg)
        return PreemptLoss(0.0, read_time(nodes, scheme, cfg), w)
    read = read_time(nodes, scheme, cfg) if last_ckpt > 0 else 0.0
    return PreemptLoss(max(progress - last_ckpt, 0.0), read, 0.0)


# ---------------------------------------------------------------- ledger

@dataclass
class OverheadLedger:
    chr_sys_ckpt: float = 0.0  # core-hours
    chr_sys_pre: float = 0.0
    chr_job_ckpt: dict[int, float] = field(default_factory=dict)

    @property
    def job_ckpt_total(self) -> float:
        return sum(self.chr_job_ckpt.values())

    @property
    def total(self) -> float:
        return self.chr_sys_ckpt + self.chr_sys_pre + self.job_ckpt_total

    def as_dict(self) -> dict:
        return {
            "chr_sys_ckpt": self.chr_sys_ckpt,
            "chr_sys_pre": self.chr_sys_pre,
            "chr_job_ckpt_total": self.job_ckpt_total,
        }


@dataclass(frozen=True)
class OverheadEvent:
    kind: str  # CKPT, REDO or READ
    job_id: int
    seconds: float


def account(ledger: OverheadLedger, event: OverheadEvent, nodes: int, scheme: CkptScheme) -> OverheadLedger:
    """Charge an overhead span to its bucket; returns the same ledger."""
    if event.seconds <= 0:
        return ledger
    ch = event.seconds * nodes / 3600.0
    if event.kind == CKPT:
        if scheme.variant is Variant.APP:
            ledger.chr_job_ckpt[event.job_id] = ledger.chr_job_ckpt.get(event.job_id, 0.0) + ch
        elif scheme.variant is Variant.NO:
            raise ValueError("no checkpoints exist without a checkpoint scheme")
        else:
            ledger.chr_sys_ckpt += ch
    elif event.kind in (REDO, READ):
        ledger.chr_sys_pre += ch
    else:
        raise ValueError(f"unknown overhead kind {event.kind!r}")
    return ledger
