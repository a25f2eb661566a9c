"""Weighted Cost Job Scheduling.

Real-time jobs whose estimated slowdown crosses a per-category threshold move
to a high-priority queue.  Each of them starts on a free partition if one
exists, otherwise on the eligible partition whose running batch jobs are the
cheapest to preempt.  The remaining jobs are scheduled by EASY backfilling,
but only while the high-priority queue is empty.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import Mapping, Sequence

from .ckpt import Variant
from .machine import placements_for
from .sim.policies import PolicyConfig, easy_pass, order_queue
from .workload import CATEGORIES, Category, Job

RTJ_ENTER_MIN, RTJ_ENTER_MAX = 1.1, 2.0

# Baseline medians consistent with the published Mira thresholds
MIRA_BASELINE_MEDIANS = {
    Category.NARROW_SHORT: 1.0,
    Category.NARROW_LONG: 1.0,
    Category.WIDE_SHORT: 17.3 / 1.5,
    Category.WIDE_LONG: 3.2,
}


@dataclass(frozen=True)
class Thresholds:
    rtj_enter: Mapping[Category, float]
    bj_protect: Mapping[Category, float]

    def __post_init__(self):
        for name in ("rtj_enter", "bj_protect"):
            m = dict(getattr(self, name))
            if set(m) != set(CATEGORIES):
                raise ValueError(f"{name} needs one value per category")
            if any(v < 1 for v in m.values()):
                raise ValueError(f"{name} values must be >= 1")
            object.__setattr__(self, name, m)
        if any(not RTJ_ENTER_MIN <= v <= RTJ_ENTER_MAX for v in self.rtj_enter.values()):
            raise ValueError("rtj_enter values must lie in [1.1, 2.0]")

    def as_dict(self) -> dict:
        return {
            "rtj_enter": {c.value: v for c, v in self.rtj_enter.items()},
            "bj_protect": {c.value: v for c, v in self.bj_protect.items()},
        }


@dataclass(frozen=True)
class CostWeights:
    w_slowdown: float = 1.0
    w_ckpt: float = 1.0
    w_time_remaining: float = 1.0

    def __post_init__(self):
        if min(self.w_slowdown, self.w_ckpt, self.w_time_remaining) < 0:
            raise ValueError("weights must be non-negative")

    def normalized(self) -> tuple[float, float, float]:
        """Weights relative to the largest one, so only their ratios matter."""
        w = (self.w_slowdown, self.w_ckpt, self.w_time_remaining)
        top = max(w)
        return (0.0, 0.0, 0.0) if top == 0 else tuple(x / top for x in w)


def esd(job: Job, clock: float, running_for: float | None = None) -> float:
    """Estimated slowdown, using walltime in place of the unknown runtime.

    ``running_for`` is the time already spent in the current execution, or
    None for a job that is not running.
    """
    elapsed = 0.0 if running_for is None else running_for
    return (job.walltime + clock - elapsed - job.submit_time) / job.walltime


def derive_thresholds(baseline_median_sd: Mapping[Category, float]) -> Thresholds:
    rtj, bj = {}, {}
    for c in CATEGORIES:
        m = baseline_median_sd.get(c, 1.0)
        rtj[c] = min(max(0.5 * m, RTJ_ENTER_MIN), RTJ_ENTER_MAX)
        bj[c] = max(1.5 * m, 1.0)
    return Thresholds(rtj, bj)


MIRA_THRESHOLDS = derive_thresholds(MIRA_BASELINE_MEDIANS)


def category_medians(sds: Sequence[tuple[Category, float]]) -> dict[Category, float]:
    """Median slowdown per category from (category, sd) pairs."""
    out = {}
    for c in CATEGORIES:
        vals = [sd for cat, sd in sds if cat == c]
        if vals:
            out[c] = statistics.median(vals)
    return out


def route(waiting: Sequence[Job], clock: float, thresholds: Thresholds, cfg=None):
    """Split waiting jobs into (high queue, low queue).

    High-queue jobs are ordered by estimated slowdown, largest first.
    """
    from .machine import MIRA
    from .workload import categorize

    cfg = cfg or MIRA
    high, low = [], []
    for j in waiting:
        if j.is_rtj and esd(j, clock) > thresholds.rtj_enter[categorize(j, cfg)]:
            high.append(j)
        else:
            low.append(j)
    high.sort(key=lambda j: (-esd(j, clock), j.submit_time, j.id))
    return high, low


def cost_factors(sim, victim, weights: CostWeights) -> tuple[float, float, float]:
    w_sd, w_ck, w_rem = weights.normalized()
    wt = victim.job.walltime
    progress = sim.progress(victim)
    sd_f = 1.0 + w_sd * (sim.esd(victim) - 1.0)
    if sim.scheme.variant is Variant.JIT:
        ck_f = 1.0
    else:
        ck_f = 1.0 + w_ck * (progress - sim.last_checkpoint(victim)) / wt
    remaining = max(wt - progress, 0.0)
    tr_f = 1.0 + w_rem * (1.0 - remaining / wt)
    return sd_f, ck_f, tr_f


def placement_score(sim, victims, weights: CostWeights) -> float:
    total = 0.0
    for v in victims:
        sd_f, ck_f, tr_f = cost_factors(sim, v, weights)
        total += v.size * sd_f * ck_f * tr_f
    return total


def eligible_victims(sim, preemptor, placement, thresholds: Thresholds):
    """Victims on ``placement`` if preempting them is allowed, else None."""
    busy, held = sim.occupants(placement)
    if held:
        return None
    victims = [sim.jobs[v] for v in busy]
    for v in victims:
        if v.status != "running" or v.job.is_rtj:
            return None
        if v.size > preemptor.size:
            return None
        if sim.esd(v) > thresholds.bj_protect[v.category]:
            return None
    return victims


class WcjsPolicy:
    def __init__(self, cfg: PolicyConfig):
        self.cfg = cfg
        self.thresholds = cfg.thresholds or MIRA_THRESHOLDS
        self.weights = cfg.weights or CostWeights()

    def choose(self, sim, s):
        """Best (placement, victims) for a high-queue job, or None."""
        best = None
        for p in placements_for(s.size, sim.machine):
            victims = eligible_victims(sim, s, p, self.thresholds)
            if victims is None:
                continue
            score = placement_score(sim, victims, self.weights)
            if best is None or score < best[0] - 1e-12:
                best = (score, p, victims)
        return None if best is None else best[1:]

    def schedule(self, sim):
        states = {s.id: s for s in sim.waiting()}
        high, _ = route([s.job for s in states.values()], sim.clock, self.thresholds, sim.machine)
        blocked = False
        for j in high:
            s = states[j.id]
            free = sim.free_placements(s.size)
            if free:
                sim.start(s.id, free[0])
                continue
            choice = self.choose(sim, s)
            if choice is None:
                blocked = True
                continue
            p, victims = choice
            sim.preempt_for(s.id, p, [v.id for v in victims])
        if blocked:
            return
        easy_pass(sim, order_queue(sim, sim.waiting(), self.cfg.score), self.cfg)


def wcjs_policy(thresholds: Thresholds | None = None, weights: CostWeights | None = None,
                backfill: str = "ff", score: str = "fcfs") -> PolicyConfig:
    return PolicyConfig("wcjs", backfill, score, thresholds=thresholds, weights=weights)
