"""Offline instances and schedules in the partition-sequence representation."""

from __future__ import annotations

import io
import math
import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from ..ckpt import ovhd_formulation
from ..machine import MachineConfig, PartitionPlacement, placements_for, round_to_partition
from ..workload import Job, Kind, TraceParseError, parse_trace, write_csv

MIN_EXEC_RATIO = 0.1
COMPARE_SIZES = (512, 1024, 2048, 4096, 8192)


@dataclass(frozen=True)
class OfflineInstance:
    jobs: tuple[Job, ...]
    machine: MachineConfig
    max_sequences: int
    sd_rtj_thresh: float = 1.2
    big_m: float | None = None
    min_exec_ratio: float = MIN_EXEC_RATIO

    def __post_init__(self):
        object.__setattr__(self, "jobs", tuple(self.jobs))
        if self.max_sequences < 1:
            raise ValueError("T must be at least 1")
        if self.sd_rtj_thresh < 1:
            raise ValueError("sd_rtj_thresh must be >= 1")
        if not 0 < self.min_exec_ratio <= 0.5:
            raise ValueError("min_exec_ratio must lie in (0, 0.5]")
        if len({j.id for j in self.jobs}) != len(self.jobs):
            raise ValueError("job ids must be unique")
        for j in self.jobs:
            round_to_partition(j.nodes, self.machine)
        if self.big_m is None:
            object.__setattr__(self, "big_m", default_big_m(self.jobs, self.machine))
        elif self.big_m <= horizon(self.jobs, self.machine):
            raise ValueError("big_m must exceed every feasible time value")

    @classmethod
    def create(cls, jobs: Sequence[Job], machine: MachineConfig, T: int | None = None, **kw):
        """Instance with T defaulting to the number of jobs."""
        return cls(tuple(jobs), machine, T if T is not None else max(len(jobs), 1), **kw)

    @property
    def rtjs(self) -> list[Job]:
        return [j for j in self.jobs if j.is_rtj]

    @property
    def bjs(self) -> list[Job]:
        return [j for j in self.jobs if not j.is_rtj]

    def index(self, job_id: int) -> int:
        """1-based position of a job, used in model variable names."""
        for i, j in enumerate(self.jobs, 1):
            if j.id == job_id:
                return i
        raise KeyError(job_id)

    def size(self, job: Job) -> int:
        return round_to_partition(job.nodes, self.machine)

    def blocks_of(self, job: Job) -> int:
        return self.size(job) // self.machine.block_size

    def placements(self, job: Job) -> list[PartitionPlacement]:
        return placements_for(self.size(job), self.machine)

    def ovhd(self, job: Job) -> float:
        return ovhd_formulation(self.size(job), self.machine)

    def with_thresh(self, thresh: float) -> "OfflineInstance":
        return OfflineInstance(self.jobs, self.machine, self.max_sequences, thresh, self.big_m, self.min_exec_ratio)


def horizon(jobs: Sequence[Job], machine: MachineConfig) -> float:
    """An upper bound on any time value of an optimal schedule."""
    if not jobs:
        return 0.0
    total = sum(j.runtime + 2 * ovhd_formulation(round_to_partition(j.nodes, machine), machine) for j in jobs)
    return max(j.submit_time for j in jobs) + total


def default_big_m(jobs: Sequence[Job], machine: MachineConfig) -> float:
    return 2.0 * horizon(jobs, machine) + 1.0


# ---------------------------------------------------------------- schedules

@dataclass(frozen=True)
class JobPlan:
    job_id: int
    placement: PartitionPlacement
    start: float
    end: float
    restarts: tuple[float, ...] = ()
    ratios: tuple[float, ...] = (1.0,)
    # block -> sequence slots used on that block, in time order (1-based)
    slots: Mapping[int, tuple[int, ...]] = field(default_factory=dict)

    @property
    def preempted(self) -> bool:
        return len(self.ratios) > 1

    @property
    def restart(self) -> float | None:
        return self.restarts[0] if self.restarts else None

    def segments(self, rt: float, ovhd: float) -> list[tuple[float, float]]:
        """(start, end) of each execution, overheads included."""
        starts = (self.start,) + self.restarts
        extra = ovhd if self.preempted else 0.0
        out = []
        for k, (s, r) in enumerate(zip(starts, self.ratios)):
            # first and last executions pay one overhead each, middle ones two
            n_ovhd = 1 if k in (0, len(self.ratios) - 1) else 2
            out.append((s, s + rt * r + extra * n_ovhd))
        return out


@dataclass
class OfflineSchedule:
    plans: dict[int, JobPlan]
    seq_start: dict[tuple[int, int], float] = field(default_factory=dict)  # (s, p) -> time

    def order_key(self) -> tuple:
        return tuple(sorted(
            (jid, p.placement.placement_index, p.ratios.__len__(), tuple(sorted(p.slots.items())))
            for jid, p in self.plans.items()
        ))


def mean_sd(inst: OfflineInstance, schedule: OfflineSchedule, kind: Kind) -> float:
    jobs = [j for j in inst.jobs if j.kind is kind]
    if not jobs:
        return 0.0
    total = 0.0
    for j in jobs:
        plan = schedule.plans[j.id]
        end = plan.start + j.runtime if j.is_rtj else plan.end
        total += (end - j.submit_time) / j.runtime
    return total / len(jobs)


def objective(inst: OfflineInstance, schedule: OfflineSchedule) -> float:
    """Mean batch-job slowdown."""
    return mean_sd(inst, schedule, Kind.BATCH)


def fill_slots(inst: OfflineInstance, plans: dict[int, JobPlan]) -> OfflineSchedule:
    """Assign sequence slots from per-block time order and derive sequence starts.

    Slots are packed from 1 upward.  Sequence starts follow the segments:
    slot 1 starts at 0, a used slot at its segment's start, and unused slots
    at the end of the block's last segment.
    """
    per_block: dict[int, list[tuple[float, int, int]]] = {}
    seg_end: dict[tuple[int, int], float] = {}
    for j in inst.jobs:
        plan = plans[j.id]
        segs = plan.segments(j.runtime, inst.ovhd(j))
        for k, (s, e) in enumerate(segs):
            seg_end[(j.id, k)] = e
            for b in plan.placement.blocks:
                per_block.setdefault(b, []).append((s, j.id, k))
    slots: dict[int, dict[int, list[int]]] = {j.id: {} for j in inst.jobs}
    seq = {}
    T = inst.max_sequences
    for b in range(1, inst.machine.num_blocks + 1):
        entries = sorted(per_block.get(b, []))
        last_end = 0.0
        for pos, (s, jid, k) in enumerate(entries, 1):
            slots[jid].setdefault(b, []).append(pos)
            if pos <= T:
                seq[(pos, b)] = 0.0 if pos == 1 else s
            last_end = seg_end[(jid, k)]
        for pos in range(len(entries) + 1, T + 1):
            seq[(pos, b)] = 0.0 if pos == 1 else last_end
    out = {}
    for jid, plan in plans.items():
        out[jid] = JobPlan(plan.job_id, plan.placement, plan.start, plan.end, plan.restarts, plan.ratios,
                           {b: tuple(v) for b, v in sorted(slots[jid].items())})
    return OfflineSchedule(out, seq)


# ---------------------------------------------------------------- generators and IO

def random_instance(seed: int, n_bj: int = 5, n_rtj: int = 2, blocks: int = 16, thresh: float = 1.2,
                    T: int | None = None, sizes: Sequence[int] = COMPARE_SIZES,
                    runtime_range=(1800.0, 7200.0), submit_span: float = 3600.0) -> OfflineInstance:
    """Seeded random mixed instance on a reduced machine.

    Sizes are drawn uniformly from ``sizes`` (restricted to what fits),
    runtimes uniformly from ``runtime_range``, walltimes as runtime times a
    uniform factor in [1, 2], submit times uniformly over ``submit_span``.
    """
    machine = MachineConfig.reduced(blocks)
    rng = random.Random(seed)
    fit = [s for s in sizes if s <= machine.total_nodes]
    jobs = []
    kinds = [Kind.BATCH] * n_bj + [Kind.REAL_TIME] * n_rtj
    for i, kind in enumerate(kinds, 1):
        rt = float(round(rng.uniform(*runtime_range)))
        wt = float(math.ceil(rt * rng.uniform(1.0, 2.0)))
        jobs.append(Job(i, float(round(rng.uniform(0.0, submit_span))), wt, rt, rng.choice(fit), kind))
    jobs.sort(key=lambda j: (j.submit_time, j.id))
    return OfflineInstance.create(jobs, machine, T, sd_rtj_thresh=thresh)


def tiny_instance(seed: int, max_jobs: int = 3, max_blocks: int = 2, max_T: int = 3) -> OfflineInstance:
    """Small random instance for exhaustive cross-checks."""
    rng = random.Random(seed)
    blocks = rng.randint(1, max_blocks)
    machine = MachineConfig.reduced(blocks)
    n = rng.randint(1, max_jobs)
    jobs = []
    for i in range(1, n + 1):
        rtj = rng.random() < 0.4
        rt = float(rng.randint(600, 2400) if rtj else rng.randint(1200, 7200))
        size = rng.choice([s for s in (512, 1024) if s <= machine.total_nodes])
        jobs.append(Job(i, float(rng.randint(0, 4) * 600), rt * 1.5, rt, size,
                        Kind.REAL_TIME if rtj else Kind.BATCH))
    T = rng.randint(max(1, min(2, max_T)), max_T)
    thresh = rng.choice([1.0, 1.1, 1.2, 1.5, 2.0, 3.0])
    return OfflineInstance(tuple(jobs), machine, T, thresh)


def load_instance(source, *, blocks: int | None = None, T: int | None = None,
                  sd_thresh: float | None = None) -> OfflineInstance:
    """Read an instance: ``# key = value`` header lines then the job CSV."""
    if isinstance(source, (bytes, bytearray)):
        text = bytes(source).decode()
    elif isinstance(source, str) and "\n" not in source:
        with open(source) as fh:
            text = fh.read()
    else:
        text = source if isinstance(source, str) else source.read()
    header, body = {}, []
    for lineno, line in enumerate(text.splitlines(), 1):
        if line.startswith("#"):
            key, sep, val = line[1:].partition("=")
            if not sep:
                raise TraceParseError(lineno, "header lines must read '# key = value'")
            header[key.strip()] = val.strip()
        else:
            body.append(line)
    jobs = parse_trace("\n".join(body).encode(), "csv")
    nb = blocks or int(header.get("blocks", 16))
    machine = MachineConfig.reduced(nb)
    t = T or (int(header["T"]) if "T" in header else None)
    th = sd_thresh or float(header.get("sd_thresh", 1.2))
    return OfflineInstance.create(jobs, machine, t, sd_rtj_thresh=th)


def dump_instance(inst: OfflineInstance) -> str:
    buf = io.StringIO()
    buf.write(f"# blocks = {inst.machine.num_blocks}\n# T = {inst.max_sequences}\n")
    buf.write(f"# sd_thresh = {inst.sd_rtj_thresh!r}\n")
    write_csv(inst.jobs, buf)
    return buf.getvalue()
