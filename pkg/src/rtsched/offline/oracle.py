"""Exhaustive reference solver for tiny instances.

Every discrete choice (placement, preempted or not, per-block order) is
enumerated.  For each one the binaries of the exported model are fixed and
the remaining continuous problem is solved as an LP, so the result depends on
the linear model alone and not on the search in :mod:`.solver`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from graphlib import CycleError, TopologicalSorter

import numpy as np
from scipy.optimize import linprog

from .instance import OfflineInstance
from .model import EQ, GE, LE, build_model


@dataclass(frozen=True)
class OracleResult:
    objective: float | None  # None when infeasible
    leaves: int


def _block_orders(items):
    """Orders of (job, part) items with each job's part 1 before its part 2."""
    for perm in itertools.permutations(items):
        pos = {it: k for k, it in enumerate(perm)}
        if all(pos[(j, 1)] < pos[(j, 2)] for j, p in items if p == 2):
            yield perm


def _acyclic(orders) -> bool:
    ts = TopologicalSorter()
    for order in orders.values():
        for a, b in zip(order, order[1:]):
            ts.add(b, a)
    try:
        ts.prepare()
    except CycleError:
        return False
    return True


class _LP:
    def __init__(self, inst: OfflineInstance):
        model = build_model(inst)
        self.model = model
        self.idx = model.var_index()
        n = len(model.variables)
        ub_rows, ub_rhs, eq_rows, eq_rhs = [], [], [], []
        for r in model.rows:
            row = np.zeros(n)
            for v, c in r.coeffs.items():
                row[self.idx[v]] = c
            if r.sense == LE:
                ub_rows.append(row)
                ub_rhs.append(r.rhs)
            elif r.sense == GE:
                ub_rows.append(-row)
                ub_rhs.append(-r.rhs)
            else:
                assert r.sense == EQ
                eq_rows.append(row)
                eq_rhs.append(r.rhs)
        self.A_ub = np.array(ub_rows) if ub_rows else None
        self.b_ub = np.array(ub_rhs) if ub_rows else None
        self.A_eq = np.array(eq_rows) if eq_rows else None
        self.b_eq = np.array(eq_rhs) if eq_rows else None
        self.c = np.zeros(n)
        for v, c in model.objective.items():
            self.c[self.idx[v]] = c
        self.base = [(v.lb, None if v.ub == math.inf else v.ub) for v in model.variables]
        self.binaries = [v.name for v in model.variables if v.kind == "B"]

    def solve(self, fixed: dict[str, float]) -> float | None:
        bounds = list(self.base)
        for name in self.binaries:
            x = fixed.get(name, 0.0)
            bounds[self.idx[name]] = (x, x)
        res = linprog(self.c, A_ub=self.A_ub, b_ub=self.b_ub, A_eq=self.A_eq, b_eq=self.b_eq,
                      bounds=bounds, method="highs",
                      options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
        if res.status != 0:
            return None
        return float(res.fun) + self.model.objective_constant


def _binaries(inst, choice, orders) -> dict[str, float]:
    val = {}
    for j, job in enumerate(inst.jobs, 1):
        pb, split = choice[j - 1]
        for q in inst.placements(job):
            val[f"exPb_{j}_{q.placement_index}"] = 1.0 if q == pb else 0.0
        if not job.is_rtj:
            val[f"exPrmpt_{j}"] = 1.0 if split else 0.0
            for q in inst.placements(job):
                val[f"v_{j}_{q.placement_index}"] = val[f"exPrmpt_{j}"] * val[f"exPb_{j}_{q.placement_index}"]
    for p, order in orders.items():
        for s, (j, _part) in enumerate(order, 1):
            job = inst.jobs[j - 1]
            val[f"{'exR' if job.is_rtj else 'exB'}_{j}_{s}_{p}"] = 1.0
    for j, job in enumerate(inst.jobs, 1):
        pb, split = choice[j - 1]
        for s in range(1, inst.max_sequences + 1):
            for p in range(1, inst.machine.num_blocks + 1):
                if job.is_rtj:
                    x = val.get(f"exR_{j}_{s}_{p}", 0.0)
                    for q in inst.placements(job):
                        if p in q.blocks:
                            val[f"y_{j}_{s}_{p}_{q.placement_index}"] = x * val[f"exPb_{j}_{q.placement_index}"]
                else:
                    x = val.get(f"exB_{j}_{s}_{p}", 0.0)
                    val[f"w_{j}_{s}_{p}"] = x * (1.0 if split else 0.0)
    return val


def exhaustive(inst: OfflineInstance) -> OracleResult:
    """Minimum model objective over all discrete schedules."""
    lp = _LP(inst)
    jobs = list(enumerate(inst.jobs, 1))
    options = []
    for j, job in jobs:
        splits = (False,) if job.is_rtj else (False, True)
        options.append([(pb, sp) for pb in inst.placements(job) for sp in splits])
    best, leaves = None, 0
    for choice in itertools.product(*options):
        per_block = {p: [] for p in range(1, inst.machine.num_blocks + 1)}
        for (j, _), (pb, split) in zip(jobs, choice):
            for p in pb.blocks:
                per_block[p] += [(j, 1), (j, 2)] if split else [(j, 0)]
        if any(len(v) > inst.max_sequences for v in per_block.values()):
            continue
        blocks = sorted(per_block)
        for combo in itertools.product(*(list(_block_orders(per_block[p])) for p in blocks)):
            orders = dict(zip(blocks, combo))
            if not _acyclic(orders):
                continue
            leaves += 1
            obj = lp.solve(_binaries(inst, choice, orders))
            if obj is not None and (best is None or obj < best):
                best = obj
    return OracleResult(best, leaves)
