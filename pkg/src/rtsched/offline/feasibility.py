"""Direct evaluation of the offline constraints on a schedule.

Products are evaluated as written rather than through the linearised rows, so
this module doubles as an independent check of the exported model.
"""

from __future__ import annotations

from dataclasses import dataclass

from .instance import OfflineInstance, OfflineSchedule
from .model import schedule_values

TOL = 1e-6


@dataclass(frozen=True)
class Violation:
    constraint: str
    where: str
    detail: str = ""

    def __str__(self):
        return f"{self.constraint}[{self.where}] {self.detail}".rstrip()


def check_feasible(inst: OfflineInstance, schedule: OfflineSchedule, tol: float = TOL) -> list[Violation]:
    out: list[Violation] = []
    B = inst.big_m
    T = inst.max_sequences
    M = inst.machine.num_blocks
    S = range(1, T + 1)
    P = range(1, M + 1)

    def bad(name, where, detail=""):
        out.append(Violation(name, where, detail))

    def le(a, b):
        return a <= b + tol * max(1.0, abs(b))

    missing = [j.id for j in inst.jobs if j.id not in schedule.plans]
    for jid in missing:
        bad("part1", f"job={jid}", "job not scheduled")
    if missing:
        return out

    # structural rules the variable encoding cannot express
    for j, job in enumerate(inst.jobs, 1):
        plan = schedule.plans[job.id]
        if plan.placement not in inst.placements(job):
            bad("part1", f"j={j}", "placement not legal for the job size")
            return out
        if job.is_rtj and plan.preempted:
            bad("preempt2", f"j={j}", "real-time jobs cannot be preempted")
        if len(plan.ratios) > 2:
            bad("preempt2", f"j={j}", f"one-preemption rule: {len(plan.ratios) - 1} preemptions")
        for p, slots in plan.slots.items():
            if any(s > T for s in slots):
                bad("seq2", f"j={j},p={p}", f"uses a sequence beyond T={T}")
            if len(slots) != len(plan.ratios):
                bad("preempt2", f"j={j},p={p}", "slot count differs from execution count")
        if set(plan.slots) != set(plan.placement.blocks):
            bad("preempt2", f"j={j}", "slots do not match the placement blocks")
    if out:
        return out

    v = schedule_values(inst, schedule)

    def g(name):
        return v.get(name, 0.0)

    # sequences
    for p in P:
        if abs(g(f"stSeq_1_{p}")) > tol:
            bad("seq1", f"p={p}")
        for s in S:
            if s < T and not le(g(f"stSeq_{s}_{p}"), g(f"stSeq_{s + 1}_{p}")):
                bad("seq2", f"s={s},p={p}")

    for j, job in enumerate(inst.jobs, 1):
        plan = schedule.plans[job.id]
        pbs = inst.placements(job)
        k = inst.blocks_of(job)
        rt = job.runtime
        st = g(f"st_{j}")
        if not le(job.submit_time, st):
            bad("st1", f"j={j}", "start before submission")
        if sum(g(f"exPb_{j}_{pb.placement_index}") for pb in pbs) != 1:
            bad("part1", f"j={j}")

        def dep(pb, p):
            return 1 if pb.first_block <= p <= pb.last_block else 0

        if job.is_rtj:
            for s in S:
                for p in P:
                    x = g(f"exR_{j}_{s}_{p}")
                    seq = g(f"stSeq_{s}_{p}")
                    if not le(seq + B * (x - 1), st * x):
                        bad("st2", f"j={j},s={s},p={p}")
                    if s < T:
                        nxt = g(f"stSeq_{s + 1}_{p}")
                        if not le((seq + rt) * x, nxt):
                            bad("seq3", f"j={j},s={s},p={p}")
                        if not le((st + rt) * x, nxt):
                            bad("seq4", f"j={j},s={s},p={p}")
            a1 = sum(dep(pb, p) * g(f"exR_{j}_{s}_{p}") * g(f"exPb_{j}_{pb.placement_index}")
                     for s in S for pb in pbs for p in P)
            if a1 != k:
                bad("assign1", f"j={j}")
            if sum(g(f"exR_{j}_{s}_{p}") for s in S for p in P) != k:
                bad("assign2", f"j={j}")
            for p in P:
                if sum(g(f"exR_{j}_{s}_{p}") for s in S) > 1:
                    bad("assign6", f"j={j},p={p}")
            continue

        o = inst.ovhd(job)
        rst, et, pr = g(f"rst_{j}"), g(f"et_{j}"), g(f"exPrmpt_{j}")
        if not le(job.submit_time, rst):
            bad("st1", f"j={j}", "restart before submission")
        first_ratio = None
        for p in P:
            col = [g(f"exB_{j}_{s}_{p}") for s in S]
            used = sum(col)
            if used > 0 and used != pr + 1:
                bad("preempt2", f"j={j},p={p}", "one-preemption rule")
            share = sum(g(f"exRt_{j}_{s}_{p}") * col[s - 1] for s in S)
            if used > 0 and abs(share - 1) > tol or used == 0 and abs(share) > tol:
                bad("preempt4", f"j={j},p={p}")
            for s in S:
                x = col[s - 1]
                ratio = g(f"exRt_{j}_{s}_{p}")
                seq = g(f"stSeq_{s}_{p}")
                later = sum(col[s - 1:])
                upto = sum(col[:s])
                idx = f"j={j},s={s},p={p}"
                if x and upto == 1:
                    if first_ratio is None:
                        first_ratio = ratio
                    elif abs(ratio - first_ratio) > tol:
                        bad("ratio1", idx, "first executions differ in length across blocks")
                if not le(seq + B * (x - 1) - B * pr, st * x):
                    bad("st3", idx)
                if not le(seq + B * (x - 1), rst * x):
                    bad("st4", idx)
                if not le(seq + B * (later - 3) + 2 * B * x - B * pr, st * x):
                    bad("st5", idx)
                if not le(st * x + rt * ratio * x + o * pr * x, et):
                    bad("et1", idx)
                if not le(rst * x + rt * ratio * x + o * pr * x, et + B * (2 - upto)):
                    bad("et2", idx)
                if s < T:
                    nxt = g(f"stSeq_{s + 1}_{p}")
                    if not le((seq + rt * ratio) * x + o * pr * x, nxt):
                        bad("seq5", idx)
                    if not le((st + rt * ratio) * x + pr * o * x, nxt + B * (2 - later) + B * (pr - 1)):
                        bad("seq6", idx)
                    if not le((rst + rt * ratio) * x + o * pr * x, nxt + B * (2 - upto)):
                        bad("seq7", idx)
                if not (le(x * inst.min_exec_ratio, ratio) and le(ratio, x)):
                    bad("preempt1", idx)
        a3 = sum(dep(pb, p) * g(f"exRt_{j}_{s}_{p}") * g(f"exPb_{j}_{pb.placement_index}")
                 for s in S for pb in pbs for p in P)
        if abs(a3 - k) > tol:
            bad("assign3", f"j={j}")
        if abs(sum(g(f"exRt_{j}_{s}_{p}") for s in S for p in P) - k) > tol:
            bad("assign4", f"j={j}")
        if sum(g(f"exB_{j}_{s}_{p}") for s in S for p in P) != k * (pr + 1):
            bad("preempt3", f"j={j}")

    for s in S:
        for p in P:
            n = sum(g(f"{'exR' if job.is_rtj else 'exB'}_{j}_{s}_{p}") for j, job in enumerate(inst.jobs, 1))
            if n > 1:
                bad("assign5", f"s={s},p={p}")

    rtjs = [(j, job) for j, job in enumerate(inst.jobs, 1) if job.is_rtj]
    if rtjs:
        mean = sum((g(f"st_{j}") + job.runtime - job.submit_time) / job.runtime for j, job in rtjs) / len(rtjs)
        if not le(mean, inst.sd_rtj_thresh):
            bad("sdcap", "rtj", f"mean RTJ slowdown {mean:.4f} exceeds {inst.sd_rtj_thresh}")
    return out
