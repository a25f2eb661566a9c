"""Deterministic discrete-event engine.

The engine owns block occupancy, job segments and the overhead ledger.
Policies inspect it through a small API (free placements, reservations,
estimated slowdowns) and act through ``start`` and ``preempt_for``.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

from .. import ckpt
from ..ckpt import CkptScheme, OverheadEvent, OverheadLedger, Span, Variant
from ..machine import MachineConfig, PartitionPlacement, placements_for, round_to_partition
from ..workload import Category, Job, JobOutcome, Segment, categorize

EPS = 1e-9

END, CKPT_DONE, PREEMPT_SETTLED, SUBMIT, START = range(5)
EVENT_NAMES = ("end", "ckpt_done", "preempt_settled", "submit", "start")


class SimulationError(RuntimeError):
    pass


class InvariantViolation(AssertionError):
    pass


@dataclass(order=True, frozen=True)
class SimEvent:
    time: float
    rank: int
    job_id: int
    seq: int
    epoch: int = field(compare=False, default=0)

    @property
    def kind(self) -> str:
        return EVENT_NAMES[self.rank]


@dataclass(frozen=True)
class PreemptionRecord:
    time: float
    preemptor: int
    victim: int
    preemptor_nodes: int
    victim_nodes: int
    victim_is_rtj: bool
    victim_esd: float
    victim_category: Category
    redo: float
    restart_read: float
    rtj_wait: float


@dataclass
class JobState:
    job: Job
    size: int
    category: Category
    status: str = "future"  # future, waiting, held, running, settling, done
    saved: float = 0.0
    epoch: int = 0
    placement: PartitionPlacement | None = None
    seg_start: float = 0.0
    initial_saved: float = 0.0
    spans: list[Span] = field(default_factory=list)
    est_end: float = 0.0
    planned_start: float = 0.0
    segments: list[Segment] = field(default_factory=list)
    preempts: int = 0

    @property
    def id(self) -> int:
        return self.job.id


class Simulator:
    def __init__(self, jobs: Sequence[Job], machine: MachineConfig, policy, scheme: CkptScheme,
                 check_invariants: bool = True, max_events: int | None = None):
        ckpt.validate_scheme(scheme, machine)
        ids = [j.id for j in jobs]
        if len(set(ids)) != len(ids):
            raise ValueError("job ids must be unique")
        self.machine = machine
        self.scheme = scheme
        self.policy = policy
        self.check = check_invariants
        self.clock = 0.0
        self.jobs: dict[int, JobState] = {}
        for j in jobs:
            size = round_to_partition(j.nodes, machine)
            self.jobs[j.id] = JobState(j, size, categorize(j, machine))
        self.busy: list[int | None] = [None] * (machine.num_blocks + 1)  # 1-based
        self.held: list[int | None] = [None] * (machine.num_blocks + 1)
        self.ledger = OverheadLedger()
        self.preemptions: list[PreemptionRecord] = []
        self.trace: list[tuple] = []
        self._events: list[SimEvent] = []
        self._seq = itertools.count()
        self._write = {}
        self.max_events = max_events if max_events is not None else 50 * max(len(jobs), 1) + 1000

    # ------------------------------------------------------------ events

    def _push(self, time: float, rank: int, job_id: int, epoch: int = 0):
        heapq.heappush(self._events, SimEvent(time, rank, job_id, next(self._seq), epoch))

    def run(self) -> tuple[list[JobOutcome], OverheadLedger]:
        for s in self.jobs.values():
            self._push(s.job.submit_time, SUBMIT, s.id)
        handled = 0
        while self._events:
            ev = heapq.heappop(self._events)
            if ev.time < self.clock - EPS:
                raise InvariantViolation("event queue went back in time")
            self.clock = max(self.clock, ev.time)
            if not self._dispatch(ev):
                continue
            handled += 1
            if handled > self.max_events:
                raise SimulationError(f"event budget of {self.max_events} exhausted; possible livelock")
            if ev.rank != CKPT_DONE:
                self.policy.schedule(self)
                if self.check:
                    self._check_occupancy()
        unfinished = [s.id for s in self.jobs.values() if s.status != "done"]
        if unfinished:
            raise SimulationError(f"event queue drained with unfinished jobs {unfinished[:10]}")
        return self.outcomes(), self.ledger

    def _dispatch(self, ev: SimEvent) -> bool:
        s = self.jobs[ev.job_id]
        if ev.rank == SUBMIT:
            s.status = "waiting"
        elif ev.rank == END:
            if ev.epoch != s.epoch or s.status != "running":
                return False
            self._close_segment(s, s.spans, ev.time)
            self._release(s)
            s.status = "done"
        elif ev.rank == CKPT_DONE:
            self._release(s)
            self._push(ev.time, PREEMPT_SETTLED, s.id)
        elif ev.rank == PREEMPT_SETTLED:
            s.status = "waiting"
        elif ev.rank == START:
            p = s.placement
            for b in p.blocks:
                if self.busy[b] is not None:
                    raise InvariantViolation(f"block {b} still busy at delayed start of job {s.id}")
                self.held[b] = None
            self._begin(s, p, ev.time)
        self.trace.append((ev.time, ev.kind, s.id))
        return True

    # ------------------------------------------------------------ occupancy

    def is_free(self, p: PartitionPlacement) -> bool:
        return all(self.busy[b] is None and self.held[b] is None for b in p.blocks)

    def free_placements(self, size: int) -> list[PartitionPlacement]:
        return [p for p in placements_for(size, self.machine) if self.is_free(p)]

    def occupants(self, p: PartitionPlacement) -> tuple[list[int], list[int]]:
        """(busy job ids, holding job ids) touching the placement, sorted."""
        busy = sorted({self.busy[b] for b in p.blocks if self.busy[b] is not None})
        held = sorted({self.held[b] for b in p.blocks if self.held[b] is not None})
        return busy, held

    def _release(self, s: JobState):
        for b in s.placement.blocks:
            if self.busy[b] == s.id:
                self.busy[b] = None

    def _check_occupancy(self):
        seen = {}
        for s in self.jobs.values():
            if s.status == "running":
                for b in s.placement.blocks:
                    if b in seen:
                        raise InvariantViolation(f"jobs {seen[b]} and {s.id} overlap on block {b}")
                    seen[b] = s.id
                    if self.busy[b] != s.id:
                        raise InvariantViolation(f"block {b} not marked busy for job {s.id}")

    def free_run_leftover(self, p: PartitionPlacement) -> int:
        """Free blocks left over in the contiguous free run holding ``p``."""
        n = self.machine.num_blocks

        def free(b):
            return self.busy[b] is None and self.held[b] is None

        lo, hi = p.first_block, p.last_block
        while lo > 1 and free(lo - 1):
            lo -= 1
        while hi < n and free(hi + 1):
            hi += 1
        return (hi - lo + 1) - p.size_blocks

    # ------------------------------------------------------------ timing helpers

    def write_time(self, s: JobState) -> float:
        w = self._write.get(s.size)
        if w is None:
            w = self._write[s.size] = ckpt.write_time(s.size, self.scheme, self.machine)
        return w

    def _marks(self, s: JobState, horizon: float) -> list[float]:
        if s.job.is_rtj:
            return []
        return ckpt.checkpoint_positions(s.job.walltime, horizon, s.size, self.scheme, self.machine)

    def _read(self, s: JobState) -> float:
        if s.saved <= 0 or self.scheme.variant is Variant.NO:
            return 0.0
        return self.write_time(s)

    def est_duration(self, s: JobState) -> float:
        """Walltime-based duration of the job's next segment, overheads included."""
        spans = ckpt.plan_segment(0.0, s.saved, s.job.walltime, self._read(s),
                                  self._marks(s, s.job.walltime), self.write_time(s))
        return spans[-1].t1

    def block_free_times(self) -> list[float]:
        t = [self.clock] * (self.machine.num_blocks + 1)
        for b in range(1, self.machine.num_blocks + 1):
            for holder in (self.busy[b], self.held[b]):
                if holder is not None:
                    t[b] = max(t[b], self.jobs[holder].est_end)
        return t

    def reservation(self, size: int, free_times: list[float] | None = None) -> tuple[float, PartitionPlacement]:
        """Earliest estimated start and placement for a job of ``size`` nodes."""
        ft = free_times or self.block_free_times()
        best = None
        for p in placements_for(size, self.machine):
            t = max(ft[b] for b in p.blocks)
            if best is None or t < best[0] - EPS:
                best = (t, p)
        return best

    def progress(self, s: JobState) -> float:
        if s.status != "running":
            return s.saved
        return ckpt.progress_at(s.spans, self.clock) if s.spans else s.saved

    def last_checkpoint(self, s: JobState) -> float:
        if s.status != "running":
            return s.saved
        return ckpt.last_checkpoint_at(s.spans, self.clock, s.initial_saved)

    def esd(self, s: JobState) -> float:
        """Estimated slowdown: waiting jobs from their queue time, running ones
        from the start of the current execution."""
        wt = s.job.walltime
        if s.status == "running":
            running_for = self.clock - s.seg_start
            return (wt + self.clock - running_for - s.job.submit_time) / wt
        return (wt + self.clock - s.job.submit_time) / wt

    # ------------------------------------------------------------ actions

    def waiting(self) -> list[JobState]:
        return [s for s in self.jobs.values() if s.status == "waiting"]

    def start(self, job_id: int, p: PartitionPlacement):
        s = self.jobs[job_id]
        if s.status != "waiting":
            raise InvariantViolation(f"job {job_id} is {s.status}, cannot start")
        if p.size_blocks * self.machine.block_size != s.size:
            raise InvariantViolation(f"job {job_id} placed on a wrong-size partition")
        if not self.is_free(p):
            raise InvariantViolation(f"placement {p} not free for job {job_id}")
        self._begin(s, p, self.clock)

    def _begin(self, s: JobState, p: PartitionPlacement, t: float):
        for b in p.blocks:
            self.busy[b] = s.id
        s.placement = p
        s.status = "running"
        s.seg_start = t
        s.initial_saved = s.saved
        w = self.write_time(s)
        read = self._read(s)
        s.spans = ckpt.plan_segment(t, s.saved, s.job.runtime, read, self._marks(s, s.job.runtime), w)
        est = ckpt.plan_segment(t, s.saved, s.job.walltime, read, self._marks(s, s.job.walltime), w)
        s.est_end = est[-1].t1
        s.epoch += 1
        self._push(s.spans[-1].t1, END, s.id, s.epoch)
        self.trace.append((t, "begin", s.id, p.size_blocks, p.placement_index))

    def preempt_for(self, rtj_id: int, p: PartitionPlacement, victims: Sequence[int]):
        """Preempt ``victims`` and start ``rtj_id`` on ``p``, after the JIT write if any."""
        r = self.jobs[rtj_id]
        if r.status != "waiting":
            raise InvariantViolation(f"preemptor {rtj_id} is {r.status}")
        busy, held = self.occupants(p)
        if held:
            raise InvariantViolation(f"placement {p} is held by a pending job")
        if sorted(victims) != busy:
            raise InvariantViolation(f"victim set {sorted(victims)} differs from occupants {busy}")
        settle = self.clock
        for vid in busy:
            settle = max(settle, self._preempt(self.jobs[vid], r))
        if settle <= self.clock + EPS:
            self.start(rtj_id, p)
            return
        for b in p.blocks:
            self.held[b] = rtj_id
        r.status = "held"
        r.placement = p
        r.planned_start = settle
        r.est_end = settle + r.job.walltime
        self._push(settle, START, rtj_id)

    def _preempt(self, v: JobState, by: JobState) -> float:
        if v.status != "running":
            raise InvariantViolation(f"victim {v.id} is not running")
        t = self.clock
        variant = self.scheme.variant
        progress = self.progress(v)
        last = self.last_checkpoint(v)
        seg_progress = progress - v.initial_saved
        loss = ckpt.preempt_loss(v.size, progress, last, seg_progress, self.scheme, self.machine)
        self.preemptions.append(PreemptionRecord(
            t, by.id, v.id, by.size, v.size, v.job.is_rtj, self.esd(v), v.category,
            loss.redo, loss.restart_read, loss.rtj_wait))
        cut = ckpt.cut_segment(v.spans, t, variant, v.initial_saved)
        spans = list(cut.spans)
        settle = t
        if variant is Variant.JIT:
            w = self.write_time(v)
            if w > 0:
                spans.append(Span(ckpt.CKPT, t, t + w, cut.progress, cut.progress))
                settle = t + w
        self._close_segment(v, spans, settle)
        v.saved = cut.saved
        v.epoch += 1  # drop its pending End
        v.preempts += 1
        v.status = "settling"
        if settle > t:
            v.est_end = settle
            self._push(settle, CKPT_DONE, v.id)
        else:
            self._release(v)
            self._push(t, PREEMPT_SETTLED, v.id)
        self.trace.append((t, "preempt", v.id, by.id))
        return settle

    def _close_segment(self, s: JobState, spans: list[Span], end: float):
        s.segments.append(Segment(s.placement, s.seg_start, end, tuple(spans)))
        for sp in spans:
            if sp.kind != ckpt.COMPUTE:
                ckpt.account(self.ledger, OverheadEvent(sp.kind, s.id, sp.length), s.size, self.scheme)

    # ------------------------------------------------------------ results

    def outcomes(self) -> list[JobOutcome]:
        out = []
        for s in sorted(self.jobs.values(), key=lambda x: x.id):
            if not s.segments:
                continue
            segs = s.segments
            ck = sum(sp.length for g in segs for sp in g.spans if sp.kind == ckpt.CKPT)
            pre = sum(sp.length for g in segs for sp in g.spans if sp.kind in (ckpt.READ, ckpt.REDO))
            out.append(JobOutcome(
                s.id, segs[0].start, segs[-1].end if s.status == "done" else math.nan,
                [g.start for g in segs[1:]], s.preempts, ck, pre, list(segs)))
        return out


def run(jobs: Sequence[Job], machine: MachineConfig, policy, scheme: CkptScheme | None = None,
        **kw) -> tuple[list[JobOutcome], OverheadLedger]:
    sim = simulate(jobs, machine, policy, scheme, **kw)
    return sim.outcomes(), sim.ledger


def simulate(jobs: Sequence[Job], machine: MachineConfig, policy, scheme: CkptScheme | None = None,
             **kw) -> Simulator:
    """Run to quiescence and return the finished simulator (records, trace, ledger)."""
    from .policies import make_policy

    sim = Simulator(sorted(jobs, key=lambda j: (j.submit_time, j.id)), machine, make_policy(policy),
                    scheme or CkptScheme(), **kw)
    sim.run()
    return sim
