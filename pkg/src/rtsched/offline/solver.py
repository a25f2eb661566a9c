"""Exact solver for small offline instances.

The search appends one execution segment at a time to the end of its
partition's blocks.  A segment is a whole job (``F``) or one half of a batch
job preempted once (``A`` then ``B`` on the same placement).  Every set of
per-block orders is produced exactly once because only the lexicographically
smallest topological order of the resulting precedence graph is explored.

Leaves without preemption are timed by a forward pass, which is optimal for a
fixed order.  Leaves with preemption have free execution shares, so their
times come from a small LP over segment starts and shares.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from ..machine import is_buddy_machine
from .instance import JobPlan, OfflineInstance, OfflineSchedule, fill_slots

F, A, B = 0, 1, 2
TOL = 1e-9
DEFAULT_JOB_CAP = 8


class Infeasible(Exception):
    """No schedule satisfies the real-time slowdown cap."""


class BudgetExceeded(Exception):
    def __init__(self, incumbent: "Solution | None"):
        super().__init__("time budget exhausted")
        self.incumbent = incumbent


@dataclass(frozen=True)
class Solution:
    schedule: OfflineSchedule
    objective: float
    rtj_sd: float
    nodes: int = 0

    def __iter__(self):
        return iter((self.schedule, self.objective))


@dataclass
class _Seg:
    j: int          # 0-based job index
    part: int
    pb: object      # PartitionPlacement
    lo: int
    hi: int

    @property
    def key(self):
        return (self.j, self.part)


class _Budget(Exception):
    pass


class _Search:
    def __init__(self, inst: OfflineInstance, deadline: float | None, minimize_rtj: bool = False):
        self.inst = inst
        self.minimize_rtj = minimize_rtj
        self.jobs = list(inst.jobs)
        self.n = len(self.jobs)
        self.M = inst.machine.num_blocks
        self.T = inst.max_sequences
        self.m = inst.min_exec_ratio
        self.deadline = deadline
        self.pbs = [inst.placements(j) for j in self.jobs]
        self.ovhd = [inst.ovhd(j) for j in self.jobs]
        self.rt = [j.runtime for j in self.jobs]
        self.sub = [j.submit_time for j in self.jobs]
        self.rtj = [j.is_rtj for j in self.jobs]
        self.n_b = sum(not r for r in self.rtj)
        self.n_r = self.n - self.n_b
        self.cap = math.inf if minimize_rtj else self.n_r * inst.sd_rtj_thresh
        self.denom = self.n_r if minimize_rtj else self.n_b
        sizes = {inst.size(j) for j in self.jobs}
        self.buddy = is_buddy_machine(inst.machine, sizes) if self.jobs else False
        # search state
        self.hist: list[list[int]] = [[] for _ in range(self.M + 1)]  # block -> seg indices
        self.front = [0.0] * (self.M + 1)
        self.segs: list[_Seg] = []
        self.lb_start: list[float] = []
        self.first: list[int | None] = [None] * self.n   # seg index of F or A
        self.second: list[int | None] = [None] * self.n  # seg index of B
        self.n_split = 0
        self.best = math.inf
        self.best_leaf = None
        self.nodes = 0

    # ------------------------------------------------------------ helpers

    def _min_dur(self, j, part):
        if part == F:
            return self.rt[j]
        return self.m * self.rt[j] + self.ovhd[j]

    def _ready(self, lo, hi):
        return max(self.front[lo:hi + 1])

    def _min_ready(self, j):
        return min(self._ready(pb.first_block, pb.last_block) for pb in self.pbs[j])

    def _lower_bound(self):
        """(bound on the objective sum, bound on the RTJ slowdown sum)."""
        obj = rtj = 0.0
        for j in range(self.n):
            rt = self.rt[j]
            f = self.first[j]
            if f is None:
                start = max(self.sub[j], self._min_ready(j))
                end = start + rt
            else:
                start = self.lb_start[f]
                seg = self.segs[f]
                if seg.part == F:
                    end = start + rt
                else:
                    o = self.ovhd[j]
                    end = start + rt + 2 * o
                    b = self.second[j]
                    b_start = self.lb_start[b] if b is not None else self._ready(seg.lo, seg.hi)
                    end = max(end, b_start + self.m * rt + o)
            if self.rtj[j]:
                rtj += (start + rt - self.sub[j]) / rt
            else:
                obj += (end - self.sub[j]) / rt
        return obj, rtj

    def _candidates(self):
        out = []
        for j in range(self.n):
            if self.first[j] is None:
                parts = (F,) if self.rtj[j] else (F, A)
                for part in parts:
                    for pb in self.pbs[j]:
                        out.append(_Seg(j, part, pb, pb.first_block, pb.last_block))
            elif self.segs[self.first[j]].part == A and self.second[j] is None:
                s = self.segs[self.first[j]]
                out.append(_Seg(j, B, s.pb, s.lo, s.hi))
        out.sort(key=lambda s: (s.j, s.part, s.pb.placement_index))
        return out

    def _admissible(self, seg: _Seg) -> bool:
        for b in range(seg.lo, seg.hi + 1):
            if len(self.hist[b]) >= self.T:
                return False
        if seg.part == B:
            # A immediately followed by B everywhere is dominated by not splitting
            a = self.first[seg.j]
            if all(self.hist[b][-1] == a for b in range(seg.lo, seg.hi + 1)):
                return False
        if seg.part == A:
            # room for the second half
            if any(len(self.hist[b]) + 2 > self.T for b in range(seg.lo, seg.hi + 1)):
                return False
        # only the lexicographically smallest topological order is explored
        key = seg.key
        for y in reversed(self.segs):
            if y.lo <= seg.hi and seg.lo <= y.hi:
                break
            if y.key > key:
                return False
        return True

    def _canon(self, lo, hi):
        if lo == hi:
            return tuple(self.segs[i].key for i in self.hist[lo])
        mid = (lo + hi) // 2
        a, b = self._canon(lo, mid), self._canon(mid + 1, hi)
        return (a, b) if a <= b else (b, a)

    def _push(self, seg: _Seg):
        idx = len(self.segs)
        start = max(self.sub[seg.j], self._ready(seg.lo, seg.hi))
        end = start + self._min_dur(seg.j, seg.part)
        saved = self.front[seg.lo:seg.hi + 1]
        for b in range(seg.lo, seg.hi + 1):
            self.hist[b].append(idx)
            self.front[b] = end
        self.segs.append(seg)
        self.lb_start.append(start)
        if seg.part == B:
            self.second[seg.j] = idx
        else:
            self.first[seg.j] = idx
            if seg.part == A:
                self.n_split += 1
        return saved

    def _pop(self, saved):
        seg = self.segs.pop()
        self.lb_start.pop()
        self.front[seg.lo:seg.hi + 1] = saved
        for b in range(seg.lo, seg.hi + 1):
            self.hist[b].pop()
        if seg.part == B:
            self.second[seg.j] = None
        else:
            self.first[seg.j] = None
            if seg.part == A:
                self.n_split -= 1

    def children(self):
        """Admissible next segments after symmetry reduction, in search order."""
        out = []
        seen: set = set()
        for seg in self._candidates():
            if not self._admissible(seg):
                continue
            if self.buddy and seg.part != B:
                saved = self._push(seg)
                canon = (seg.key, self._canon(1, self.M))
                self._pop(saved)
                if canon in seen:
                    continue
                seen.add(canon)
            out.append(seg)
        return out

    # ------------------------------------------------------------ search

    def _complete(self):
        return all(
            f is not None and (self.segs[f].part == F or self.second[j] is not None)
            for j, f in enumerate(self.first)
        )

    def dfs(self, pos=()):
        self.nodes += 1
        if self.deadline is not None and self.nodes % 256 == 0 and time.monotonic() > self.deadline:
            raise _Budget
        obj_lb, rtj_lb = self._lower_bound()
        if rtj_lb > self.cap + 1e-9 * max(1.0, self.cap):
            return
        if self.minimize_rtj:
            obj_lb = rtj_lb
        if self.denom and obj_lb / self.denom >= self.best - TOL:
            return
        if not self.denom and self.best <= 0.0:
            return
        if self._complete():
            self._leaf(pos)
            return
        for k, seg in enumerate(self.children()):
            saved = self._push(seg)
            try:
                self.dfs(pos + (k,))
            finally:
                self._pop(saved)

    def _leaf(self, pos):
        if self.n_split == 0:
            starts, ratios = list(self.lb_start), {}
        else:
            res = leaf_lp(self)
            if res is None:
                return
            ratios = res
            starts = forward_pass(self, ratios)
        obj, rtj_sum = evaluate(self, starts, ratios)
        if rtj_sum > self.cap + 1e-9 * max(1.0, self.cap):
            return
        if self.minimize_rtj:
            obj = rtj_sum
        obj = obj / self.denom if self.denom else 0.0
        if obj < self.best - TOL:
            self.best = obj
            self.best_leaf = (pos, [(s.j, s.part, s.pb) for s in self.segs], starts, ratios)

    def replay(self, path):
        """Push the segments along a child-index path (used by the worker pool)."""
        for k in path:
            seg = self.children()[k]
            self._push(seg)


def _seg_duration(rt, o, part, r):
    if part == F:
        return rt
    return (r if part == A else 1.0 - r) * rt + o


def forward_pass(search: _Search, ratios: dict[int, float]) -> list[float]:
    """Earliest segment starts in append order for fixed execution shares."""
    front = [0.0] * (search.M + 1)
    starts = []
    for seg in search.segs:
        s = max([search.sub[seg.j]] + front[seg.lo:seg.hi + 1])
        e = s + _seg_duration(search.rt[seg.j], search.ovhd[seg.j], seg.part, ratios.get(seg.j, 1.0))
        for b in range(seg.lo, seg.hi + 1):
            front[b] = e
        starts.append(s)
    return starts


def evaluate(search: _Search, starts, ratios) -> tuple[float, float]:
    obj = rtj = 0.0
    for i, seg in enumerate(search.segs):
        j = seg.j
        rt, sub = search.rt[j], search.sub[j]
        if search.rtj[j]:
            rtj += (starts[i] + rt - sub) / rt
        elif seg.part == F:
            obj += (starts[i] + rt - sub) / rt
        elif seg.part == B:
            obj += (starts[i] + (1.0 - ratios[j]) * rt + search.ovhd[j] - sub) / rt
    return obj, rtj


def leaf_lp(search: _Search) -> dict[int, float] | None:
    """Optimal first-execution shares for a leaf with preempted jobs, or None."""
    segs = search.segs
    n = len(segs)
    split = sorted({s.j for s in segs if s.part == A})
    col = {j: n + k for k, j in enumerate(split)}
    nv = n + len(split)
    rows, rhs = [], []
    # consecutive segments on each block
    pairs = set()
    for b in range(1, search.M + 1):
        h = search.hist[b]
        pairs.update(zip(h, h[1:]))
    for u, v in sorted(pairs):
        su = segs[u]
        row = np.zeros(nv)
        row[u], row[v] = 1.0, -1.0
        rt, o = search.rt[su.j], search.ovhd[su.j]
        if su.part == F:
            c = -rt
        elif su.part == A:
            row[col[su.j]] = rt
            c = -o
        else:
            row[col[su.j]] = -rt
            c = -rt - o
        rows.append(row)
        rhs.append(c)
    if search.n_r:
        row = np.zeros(nv)
        const = 0.0
        for i, s in enumerate(segs):
            if search.rtj[s.j]:
                row[i] = 1.0 / search.rt[s.j]
                const += (search.rt[s.j] - search.sub[s.j]) / search.rt[s.j]
        rows.append(row)
        rhs.append(search.cap - const)
    c = np.zeros(nv)
    for i, s in enumerate(segs):
        if search.rtj[s.j]:
            continue
        if s.part in (F, B):
            c[i] = 1.0 / search.rt[s.j]
        if s.part == B:
            c[col[s.j]] = -1.0
    bounds = [(search.sub[s.j], None) for s in segs]
    bounds += [(search.m, 1.0 - search.m)] * len(split)
    res = linprog(c, A_ub=np.array(rows) if rows else None, b_ub=np.array(rhs) if rhs else None,
                  bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        return None
    return {j: float(min(max(res.x[col[j]], search.m), 1.0 - search.m)) for j in split}


def _to_solution(inst: OfflineInstance, leaf, obj: float, nodes: int) -> Solution:
    _, segs, starts, ratios = leaf
    jobs = inst.jobs
    first, second = {}, {}
    for (j, part, pb), s in zip(segs, starts):
        (second if part == B else first)[j] = (part, pb, s)
    plans = {}
    rtj_sum = 0.0
    for j, job in enumerate(jobs):
        part, pb, s = first[j]
        if part == F:
            plans[job.id] = JobPlan(job.id, pb, s, s + job.runtime)
        else:
            r = ratios[j]
            sb = second[j][2]
            plans[job.id] = JobPlan(job.id, pb, s, sb + (1.0 - r) * job.runtime + inst.ovhd(job),
                                    (sb,), (r, 1.0 - r))
        if job.is_rtj:
            rtj_sum += (s + job.runtime - job.submit_time) / job.runtime
    rtj_sd = rtj_sum / len(inst.rtjs) if inst.rtjs else 0.0
    return Solution(fill_slots(inst, plans), obj, rtj_sd, nodes)


def min_rtj_slowdown(inst: OfflineInstance, budget: float | None = None) -> float:
    """Smallest achievable mean RTJ slowdown, batch jobs ignored.

    Batch jobs can always be deferred behind every real-time job, so a cap is
    feasible exactly when it is at least this value.
    """
    rtjs = inst.rtjs
    if not rtjs:
        return 1.0
    sub = OfflineInstance(tuple(rtjs), inst.machine, inst.max_sequences, inst.sd_rtj_thresh, inst.big_m,
                          inst.min_exec_ratio)
    deadline = None if budget is None else time.monotonic() + budget
    s = _Search(sub, deadline, minimize_rtj=True)
    try:
        s.dfs()
    except _Budget:
        raise BudgetExceeded(None) from None
    return s.best


def _check_size(inst: OfflineInstance, job_cap: int):
    if len(inst.jobs) > job_cap:
        raise ValueError(f"exact solving is limited to {job_cap} jobs, got {len(inst.jobs)}")


def _subtree(args):
    inst, path, deadline = args
    s = _Search(inst, deadline)
    s.replay(path)
    try:
        s.dfs(path)
        done = True
    except _Budget:
        done = False
    return s.best, s.best_leaf, s.nodes, done


def solve_exact(inst: OfflineInstance, budget: float | None = None, *, workers: int = 1,
                job_cap: int = DEFAULT_JOB_CAP) -> Solution:
    """Globally optimal schedule minimising mean batch-job slowdown.

    ``budget`` is a wall-clock limit in seconds.  With ``workers > 1`` the
    children of the root are searched in separate processes; the result does
    not depend on the worker count.
    """
    _check_size(inst, job_cap)
    deadline = None if budget is None else time.monotonic() + budget
    if inst.rtjs and inst.bjs:
        floor = min_rtj_slowdown(inst, budget)
        if floor > inst.sd_rtj_thresh + TOL:
            raise Infeasible(f"mean RTJ slowdown cannot go below {floor:.6g}")
    if workers <= 1:
        s = _Search(inst, deadline)
        try:
            s.dfs()
        except _Budget:
            inc = None if s.best_leaf is None else _to_solution(inst, s.best_leaf, s.best, s.nodes)
            raise BudgetExceeded(inc) from None
        if s.best_leaf is None:
            raise Infeasible(f"no schedule meets mean RTJ slowdown <= {inst.sd_rtj_thresh}")
        return _to_solution(inst, s.best_leaf, s.best, s.nodes)

    root = _Search(inst, None)
    paths = [(k,) for k in range(len(root.children()))] if not root._complete() else [()]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(_subtree, [(inst, p, deadline) for p in paths]))
    best, leaf, nodes, done = math.inf, None, 0, True
    # merge in search order with the same acceptance rule as the sequential run
    for b, lf, n, ok in results:
        nodes += n
        done = done and ok
        if lf is not None and b < best - TOL:
            best, leaf = b, lf
    if not done:
        raise BudgetExceeded(None if leaf is None else _to_solution(inst, leaf, best, nodes))
    if leaf is None:
        raise Infeasible(f"no schedule meets mean RTJ slowdown <= {inst.sd_rtj_thresh}")
    return _to_solution(inst, leaf, best, nodes)


def threshold_search(inst: OfflineInstance, lo: float = 1.1, hi: float = 2.0, tol: float = 0.01,
                     budget: float | None = None, **kw) -> tuple[float, Solution]:
    """Smallest feasible RTJ slowdown cap in [lo, hi], up to ``tol``."""
    if not lo < hi:
        raise ValueError("need lo < hi")
    _check_size(inst, kw.get("job_cap", DEFAULT_JOB_CAP))
    floor = min_rtj_slowdown(inst, budget)
    if floor > hi + TOL:
        raise Infeasible(f"infeasible even at threshold {hi}")
    if floor >= lo:
        # the cap is feasible exactly from the floor upward
        return floor, solve_exact(inst.with_thresh(max(floor, 1.0)), budget, **kw)
    try:
        best = solve_exact(inst.with_thresh(hi), budget, **kw)
    except Infeasible:
        raise Infeasible(f"infeasible even at threshold {hi}") from None
    try:
        return lo, solve_exact(inst.with_thresh(lo), budget, **kw)
    except Infeasible:
        pass
    while hi - lo > tol:
        mid = (lo + hi) / 2
        try:
            best = solve_exact(inst.with_thresh(mid), budget, **kw)
            hi = mid
        except Infeasible:
            lo = mid
    return hi, best
