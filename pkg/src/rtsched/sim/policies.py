"""Scheduling passes: EASY backfilling, high-priority queue, preemption."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from ..machine import PartitionPlacement, overlaps, placements_for

EPS = 1e-9

POLICIES = ("baseline", "hpq", "preempt", "wcjs")
BACKFILLS = ("ff", "bf", "sjf")
SCORES = ("fcfs", "wfp")


@dataclass(frozen=True)
class PolicyConfig:
    name: str = "baseline"
    backfill: str = "ff"
    score: str = "fcfs"
    # preempt policy: refuse victims on larger partitions than the preemptor
    protect_larger: bool = True
    # wcjs only; see wcjs.Thresholds / wcjs.CostWeights
    thresholds: object = None
    weights: object = None

    def __post_init__(self):
        if self.name not in POLICIES:
            raise ValueError(f"unknown policy {self.name!r}")
        if self.backfill not in BACKFILLS:
            raise ValueError(f"unknown backfill {self.backfill!r}")
        if self.score not in SCORES:
            raise ValueError(f"unknown score {self.score!r}")


def make_policy(policy):
    if not isinstance(policy, PolicyConfig):
        return policy
    if policy.name == "baseline":
        return Baseline(policy)
    if policy.name == "hpq":
        return HighPriorityQueue(policy)
    if policy.name == "preempt":
        return Preemptive(policy)
    from ..wcjs import WcjsPolicy

    return WcjsPolicy(policy)


def fcfs_key(s):
    return (s.job.submit_time, s.size, s.id)


def order_queue(sim, states, score: str):
    if score == "fcfs":
        return sorted(states, key=fcfs_key)
    clock = sim.clock

    def wfp(s):
        return -((clock - s.job.submit_time) / s.job.walltime) * math.sqrt(s.size)

    return sorted(states, key=lambda s: (wfp(s), fcfs_key(s)))


def pick_placement(sim, options: Sequence[PartitionPlacement], rule: str):
    if not options:
        return None
    if rule == "bf":
        return min(options, key=lambda p: (sim.free_run_leftover(p), p.placement_index))
    return options[0]


def easy_pass(sim, queue, cfg: PolicyConfig):
    """EASY backfilling with a single reservation for the queue head."""
    queue = list(queue)
    rule = "ff" if cfg.backfill == "sjf" else cfg.backfill
    while queue:
        p = pick_placement(sim, sim.free_placements(queue[0].size), rule)
        if p is None:
            break
        sim.start(queue.pop(0).id, p)
    if not queue:
        return
    res_t, res_p = sim.reservation(queue[0].size)
    rest = queue[1:]
    if cfg.backfill == "sjf":
        rest.sort(key=lambda s: (s.job.walltime, fcfs_key(s)))
    for s in rest:
        ends_in_time = sim.clock + sim.est_duration(s) <= res_t + EPS
        options = [p for p in sim.free_placements(s.size) if ends_in_time or not overlaps(p, res_p)]
        p = pick_placement(sim, options, rule)
        if p is not None:
            sim.start(s.id, p)


class Baseline:
    def __init__(self, cfg: PolicyConfig):
        self.cfg = cfg

    def schedule(self, sim):
        easy_pass(sim, order_queue(sim, sim.waiting(), self.cfg.score), self.cfg)


class HighPriorityQueue:
    """Real-time jobs first; batch jobs only while no real-time job waits."""

    def __init__(self, cfg: PolicyConfig):
        self.cfg = cfg

    def schedule(self, sim):
        rt = [s for s in sim.waiting() if s.job.is_rtj]
        if rt:
            easy_pass(sim, order_queue(sim, rt, "fcfs"), self.cfg)
        if any(s.job.is_rtj for s in sim.waiting()):
            return
        easy_pass(sim, order_queue(sim, sim.waiting(), self.cfg.score), self.cfg)


def victim_cost(sim, victims) -> float:
    """Remaining walltime-estimated work of the victims, in node-seconds."""
    return sum((s.job.walltime - sim.progress(s)) * s.size for s in victims)


class Preemptive:
    """Each waiting real-time job takes a free placement or preempts batch jobs."""

    def __init__(self, cfg: PolicyConfig):
        self.cfg = cfg

    def candidates(self, sim, rtj):
        out = []
        for p in placements_for(rtj.size, sim.machine):
            busy, held = sim.occupants(p)
            if held or not busy:
                continue
            victims = [sim.jobs[v] for v in busy]
            if any(v.status != "running" or v.job.is_rtj for v in victims):
                continue
            if self.cfg.protect_larger and any(v.size > rtj.size for v in victims):
                continue
            out.append((victim_cost(sim, victims), p.placement_index, p, busy))
        return out

    def schedule(self, sim):
        for r in sorted((s for s in sim.waiting() if s.job.is_rtj), key=fcfs_key):
            free = sim.free_placements(r.size)
            if free:
                sim.start(r.id, pick_placement(sim, free, self.cfg.backfill))
                continue
            cands = self.candidates(sim, r)
            if cands:
                _, _, p, victims = min(cands, key=lambda c: (c[0], c[1]))
                sim.preempt_for(r.id, p, victims)
        easy_pass(sim, order_queue(sim, sim.waiting(), self.cfg.score), self.cfg)
