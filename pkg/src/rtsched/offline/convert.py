"""Map simulator outcomes onto offline schedules so both worlds share one checker."""

from __future__ import annotations

from typing import Sequence

from ..ckpt import COMPUTE, REDO
from ..workload import JobOutcome
from .instance import JobPlan, OfflineInstance, OfflineSchedule, fill_slots


def from_outcomes(inst: OfflineInstance, outcomes: Sequence[JobOutcome]) -> tuple[OfflineSchedule | None, list[str]]:
    """Offline view of a simulated run, plus what it cannot express.

    Each simulated segment becomes one execution whose share is the compute
    it kept.  Problems are returned for unfinished jobs, executions on
    different placements and work lost to redo; a schedule is still built
    when only the offline constraints themselves are broken.
    """
    by_id = {o.job_id: o for o in outcomes}
    problems: list[str] = []
    plans = {}
    for job in inst.jobs:
        o = by_id.get(job.id)
        if o is None or not o.segments or o.end_time != o.end_time:
            problems.append(f"job {job.id} did not finish")
            continue
        segs = o.segments
        if len({g.placement for g in segs}) > 1:
            problems.append(f"job {job.id} restarted on a different placement")
        if any(sp.kind == REDO for g in segs for sp in g.spans):
            problems.append(f"job {job.id} lost work to redo")
        ratios = tuple(
            sum(sp.length for sp in g.spans if sp.kind == COMPUTE) / job.runtime for g in segs
        ) if len(segs) > 1 else (1.0,)
        plans[job.id] = JobPlan(job.id, segs[0].placement, segs[0].start, o.end_time,
                                tuple(g.start for g in segs[1:]), ratios)
    if len(plans) != len(inst.jobs):
        return None, problems
    return fill_slots(inst, plans), problems
