"""Mixed-integer model of the offline problem, linearised for LP-format export.

Variable names (job index ``j`` is the 1-based position in the instance):

===============  ==================================================
exR_j_s_p        real-time job j runs in sequence s of block p
exB_j_s_p        batch job j runs in sequence s of block p
exPb_j_pb        job j uses placement pb
exPrmpt_j        batch job j is preempted once
st_j, rst_j      start and restart time
et_j             end time of batch job j
stSeq_s_p        start time of sequence s on block p
exRt_j_s_p       share of batch job j's runtime executed in (s, p)
r1_j             share executed before the preemption
zSt/zRst/zSeq    products st*ex, rst*ex, stSeq*ex
zRt_j_s_p        exRt*exB
zRtPb_j_s_p_pb   exRt*exPb
w_j_s_p          exPrmpt*exB
y_j_s_p_pb       exR*exPb
v_j_pb           exPrmpt*exPb
===============  ==================================================

Every product of the source constraints is replaced by one of the ``z``,
``w``, ``y`` or ``v`` auxiliaries plus its standard linearisation rows.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, TextIO

from .instance import OfflineInstance, OfflineSchedule

log = logging.getLogger(__name__)

BINARY_WARN = 2000
LE, GE, EQ = "<=", ">=", "="


@dataclass(frozen=True)
class Var:
    name: str
    kind: str  # "B" or "C"
    lb: float
    ub: float


@dataclass
class Row:
    name: str
    coeffs: dict[str, float]
    sense: str
    rhs: float

    @property
    def family(self) -> str:
        return self.name.split("[", 1)[0]


@dataclass
class ModelExport:
    variables: list[Var] = field(default_factory=list)
    rows: list[Row] = field(default_factory=list)
    objective: dict[str, float] = field(default_factory=dict)
    objective_constant: float = 0.0
    sense: str = "minimize"

    @property
    def binary_count(self) -> int:
        return sum(v.kind == "B" for v in self.variables)

    def var_index(self) -> dict[str, int]:
        return {v.name: i for i, v in enumerate(self.variables)}

    def families(self) -> set[str]:
        return {r.family for r in self.rows}


class _Builder:
    def __init__(self):
        self.m = ModelExport()
        self._names: set[str] = set()

    def var(self, name, kind="C", lb=0.0, ub=float("inf")) -> str:
        if name in self._names:
            raise ValueError(f"duplicate variable {name}")
        self._names.add(name)
        self.m.variables.append(Var(name, kind, lb, ub))
        return name

    def row(self, name, terms: Iterable[tuple[str, float]], sense, rhs):
        coeffs: dict[str, float] = {}
        for v, c in terms:
            coeffs[v] = coeffs.get(v, 0.0) + c
        coeffs = {v: c for v, c in coeffs.items() if c != 0.0}
        self.m.rows.append(Row(name, coeffs, sense, float(rhs)))

    def bin_product(self, name, a, b):
        y = self.var(name, "B", 0.0, 1.0)
        self.row(f"lin[{name},a]", [(y, 1), (a, -1)], LE, 0)
        self.row(f"lin[{name},b]", [(y, 1), (b, -1)], LE, 0)
        self.row(f"lin[{name},ab]", [(y, 1), (a, -1), (b, -1)], GE, -1)
        return y

    def cont_product(self, name, x, b, ub):
        """z = x*b for x in [0, ub] and binary b."""
        z = self.var(name, "C", 0.0, ub)
        self.row(f"lin[{name},ub]", [(z, 1), (b, -ub)], LE, 0)
        self.row(f"lin[{name},x]", [(z, 1), (x, -1)], LE, 0)
        self.row(f"lin[{name},lo]", [(z, 1), (x, -1), (b, -ub)], GE, -ub)
        return z


def build_model(inst: OfflineInstance) -> ModelExport:
    b = _Builder()
    B = inst.big_m
    T = inst.max_sequences
    M = inst.machine.num_blocks
    S = range(1, T + 1)
    P = range(1, M + 1)
    jobs = list(enumerate(inst.jobs, 1))
    rtjs = [(j, job) for j, job in jobs if job.is_rtj]
    bjs = [(j, job) for j, job in jobs if not job.is_rtj]
    m_ratio = inst.min_exec_ratio

    # sequence starts
    for s in S:
        for p in P:
            b.var(f"stSeq_{s}_{p}", ub=B)
    for p in P:
        b.row(f"seq1[p={p}]", [(f"stSeq_1_{p}", 1)], EQ, 0)
        for s in S:
            if s < T:
                b.row(f"seq2[s={s},p={p}]", [(f"stSeq_{s}_{p}", 1), (f"stSeq_{s + 1}_{p}", -1)], LE, 0)

    for j, job in jobs:
        k = inst.blocks_of(job)
        pbs = inst.placements(job)
        ex = "exR" if job.is_rtj else "exB"
        st = b.var(f"st_{j}", ub=B)
        b.row(f"st1[j={j}]", [(st, 1)], GE, job.submit_time)
        for pb in pbs:
            b.var(f"exPb_{j}_{pb.placement_index}", "B", 0, 1)
        b.row(f"part1[j={j}]", [(f"exPb_{j}_{pb.placement_index}", 1) for pb in pbs], EQ, 1)
        for s in S:
            for p in P:
                x = b.var(f"{ex}_{j}_{s}_{p}", "B", 0, 1)
                b.cont_product(f"zSt_{j}_{s}_{p}", st, x, B)
                b.cont_product(f"zSeq_{j}_{s}_{p}", f"stSeq_{s}_{p}", x, B)

        if job.is_rtj:
            _rtj_rows(b, inst, j, job, k, pbs)
        else:
            _bj_rows(b, inst, j, job, k, pbs, m_ratio)

    # at most one job per (s, p)
    for s in S:
        for p in P:
            terms = [(f"{'exR' if job.is_rtj else 'exB'}_{j}_{s}_{p}", 1) for j, job in jobs]
            if terms:
                b.row(f"assign5[s={s},p={p}]", terms, LE, 1)

    if rtjs:
        terms = [(f"st_{j}", 1.0 / job.runtime) for j, job in rtjs]
        rhs = len(rtjs) * inst.sd_rtj_thresh - sum((job.runtime - job.submit_time) / job.runtime for _, job in rtjs)
        b.row("sdcap", terms, LE, rhs)

    if bjs:
        nb = len(bjs)
        b.m.objective = {f"et_{j}": 1.0 / (job.runtime * nb) for j, job in bjs}
        b.m.objective_constant = -sum(job.submit_time / job.runtime for _, job in bjs) / nb

    if b.m.binary_count > BINARY_WARN:
        log.warning("offline model has %d binary variables; exact solving will be slow", b.m.binary_count)
    return b.m


def _rtj_rows(b: _Builder, inst, j, job, k, pbs):
    B, T, M, rt = inst.big_m, inst.max_sequences, inst.machine.num_blocks, job.runtime
    for s in range(1, T + 1):
        for p in range(1, M + 1):
            x = f"exR_{j}_{s}_{p}"
            b.row(f"st2[j={j},s={s},p={p}]", [(f"zSt_{j}_{s}_{p}", 1), (f"stSeq_{s}_{p}", -1), (x, -B)], GE, -B)
            if s < T:
                nxt = f"stSeq_{s + 1}_{p}"
                b.row(f"seq3[j={j},s={s},p={p}]", [(f"zSeq_{j}_{s}_{p}", 1), (x, rt), (nxt, -1)], LE, 0)
                b.row(f"seq4[j={j},s={s},p={p}]", [(f"zSt_{j}_{s}_{p}", 1), (x, rt), (nxt, -1)], LE, 0)
    terms = []
    for s in range(1, T + 1):
        for pb in pbs:
            for p in pb.blocks:
                y = b.bin_product(f"y_{j}_{s}_{p}_{pb.placement_index}", f"exR_{j}_{s}_{p}",
                                  f"exPb_{j}_{pb.placement_index}")
                terms.append((y, 1))
    b.row(f"assign1[j={j}]", terms, EQ, k)
    b.row(f"assign2[j={j}]", [(f"exR_{j}_{s}_{p}", 1) for s in range(1, T + 1) for p in range(1, M + 1)], EQ, k)
    for p in range(1, M + 1):
        b.row(f"assign6[j={j},p={p}]", [(f"exR_{j}_{s}_{p}", 1) for s in range(1, T + 1)], LE, 1)


def _bj_rows(b: _Builder, inst, j, job, k, pbs, m_ratio):
    B, T, M, rt = inst.big_m, inst.max_sequences, inst.machine.num_blocks, job.runtime
    o = inst.ovhd(job)
    S, P = range(1, T + 1), range(1, M + 1)
    rst, et = b.var(f"rst_{j}", ub=B), b.var(f"et_{j}", ub=B)
    pr = b.var(f"exPrmpt_{j}", "B", 0, 1)
    r1 = b.var(f"r1_{j}", ub=1.0)
    b.row(f"st1[j={j},restart]", [(rst, 1)], GE, job.submit_time)
    for s in S:
        for p in P:
            x = f"exB_{j}_{s}_{p}"
            rt_v = b.var(f"exRt_{j}_{s}_{p}", ub=1.0)
            b.cont_product(f"zRst_{j}_{s}_{p}", rst, x, B)
            b.cont_product(f"zRt_{j}_{s}_{p}", rt_v, x, 1.0)
            b.bin_product(f"w_{j}_{s}_{p}", pr, x)
    for s in S:
        for p in P:
            x = f"exB_{j}_{s}_{p}"
            zst, zrst, zseq = f"zSt_{j}_{s}_{p}", f"zRst_{j}_{s}_{p}", f"zSeq_{j}_{s}_{p}"
            zrt, w, seq = f"zRt_{j}_{s}_{p}", f"w_{j}_{s}_{p}", f"stSeq_{s}_{p}"
            later = [(f"exB_{j}_{si}_{p}", 1) for si in range(s, T + 1)]
            upto = [(f"exB_{j}_{si}_{p}", 1) for si in range(1, s + 1)]
            idx = f"j={j},s={s},p={p}"
            # st*ex >= stSeq + B(ex-1) - B*prmpt
            b.row(f"st3[{idx}]", [(zst, 1), (seq, -1), (x, -B), (pr, B)], GE, -B)
            b.row(f"st4[{idx}]", [(zrst, 1), (seq, -1), (x, -B)], GE, -B)
            # st*ex >= stSeq + B(sum_{si>=s} ex - 3) + 2B ex - B prmpt
            b.row(f"st5[{idx}]", [(zst, 1), (seq, -1)] + [(v, -B) for v, _ in later] + [(x, -2 * B), (pr, B)],
                  GE, -3 * B)
            b.row(f"et1[{idx}]", [(zst, 1), (zrt, rt), (w, o), (et, -1)], LE, 0)
            b.row(f"et2[{idx}]", [(zrst, 1), (zrt, rt), (w, o), (et, -1)] + [(v, B) for v, _ in upto], LE, 2 * B)
            if s < T:
                nxt = f"stSeq_{s + 1}_{p}"
                b.row(f"seq5[{idx}]", [(zseq, 1), (zrt, rt), (w, o), (nxt, -1)], LE, 0)
                b.row(f"seq6[{idx}]", [(zst, 1), (zrt, rt), (w, o), (nxt, -1)] + [(v, B) for v, _ in later]
                      + [(pr, -B)], LE, B)
                b.row(f"seq7[{idx}]", [(zrst, 1), (zrt, rt), (w, o), (nxt, -1)] + [(v, B) for v, _ in upto],
                      LE, 2 * B)
            b.row(f"preempt1[{idx},lo]", [(f"exRt_{j}_{s}_{p}", 1), (x, -m_ratio)], GE, 0)
            b.row(f"preempt1[{idx},hi]", [(f"exRt_{j}_{s}_{p}", 1), (x, -1)], LE, 0)
            # the first execution has the same share r1 on every block it uses
            before = [(f"exB_{j}_{si}_{p}", -1) for si in range(1, s)]
            b.row(f"ratio1[{idx},hi]", [(f"exRt_{j}_{s}_{p}", 1), (r1, -1), (x, 1)] + before, LE, 1)
            b.row(f"ratio1[{idx},lo]", [(r1, 1), (f"exRt_{j}_{s}_{p}", -1), (x, 1)] + before, LE, 1)
    zrtpb = []
    for s in S:
        for pb in pbs:
            for p in pb.blocks:
                z = b.cont_product(f"zRtPb_{j}_{s}_{p}_{pb.placement_index}", f"exRt_{j}_{s}_{p}",
                                   f"exPb_{j}_{pb.placement_index}", 1.0)
                zrtpb.append((z, 1))
    b.row(f"assign3[j={j}]", zrtpb, EQ, k)
    b.row(f"assign4[j={j}]", [(f"exRt_{j}_{s}_{p}", 1) for s in S for p in P], EQ, k)
    for pb in pbs:
        b.bin_product(f"v_{j}_{pb.placement_index}", pr, f"exPb_{j}_{pb.placement_index}")
    for p in P:
        covering = [pb for pb in pbs if pb.first_block <= p <= pb.last_block]
        # sum_s ex = exPrmpt + 1 on used blocks, 0 elsewhere
        b.row(f"preempt2[j={j},p={p}]", [(f"exB_{j}_{s}_{p}", 1) for s in S]
              + [(f"exPb_{j}_{pb.placement_index}", -1) for pb in covering]
              + [(f"v_{j}_{pb.placement_index}", -1) for pb in covering], EQ, 0)
        # sum_s exRt*ex = 1 on used blocks, 0 elsewhere
        b.row(f"preempt4[j={j},p={p}]", [(f"zRt_{j}_{s}_{p}", 1) for s in S]
              + [(f"exPb_{j}_{pb.placement_index}", -1) for pb in covering], EQ, 0)
    b.row(f"preempt3[j={j}]", [(f"exB_{j}_{s}_{p}", 1) for s in S for p in P] + [(pr, -k)], EQ, k)


# ---------------------------------------------------------------- LP format

def _num(x: float) -> str:
    return repr(float(x)) if x != int(x) or abs(x) >= 1e15 else str(int(x))


def _terms(coeffs: dict[str, float]) -> str:
    parts = []
    for i, (v, c) in enumerate(coeffs.items()):
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        coef = "" if mag == 1 else _num(mag) + " "
        if i == 0:
            parts.append(("- " if c < 0 else "") + coef + v)
        else:
            parts.append(f"{sign} {coef}{v}")
    return " ".join(parts)


def _wrap(text: str, width: int = 200) -> list[str]:
    lead = text[:len(text) - len(text.lstrip(" "))]
    lines, cur = [], ""
    for tok in text.split():
        tok = lead + tok if not cur and not lines else tok
        if cur and len(cur) + len(tok) + 1 > width:
            lines.append(cur)
            cur = "   " + tok
        else:
            cur = f"{cur} {tok}" if cur else tok
    lines.append(cur)
    return lines


def _lp_name(name: str) -> str:
    return name.replace("[", "(").replace("]", ")").replace("=", "").replace(",", "_")


def export_lp(model: ModelExport, sink: TextIO) -> None:
    """Write the model in CPLEX LP format."""
    out = [f"\\ objective constant: {_num(model.objective_constant)}", "Minimize"]
    objective = model.objective or ({model.variables[0].name: 0.0} if model.variables else {})
    out += _wrap((" obj: " + _terms(objective)).rstrip())
    out.append("Subject To")
    for r in model.rows:
        sense = {LE: "<=", GE: ">=", EQ: "="}[r.sense]
        out += _wrap(f" {_lp_name(r.name)}: {_terms(r.coeffs)} {sense} {_num(r.rhs)}")
    out.append("Bounds")
    for v in model.variables:
        if v.kind == "B":
            continue
        ub = "+inf" if v.ub == float("inf") else _num(v.ub)
        out.append(f" {_num(v.lb)} <= {v.name} <= {ub}")
    binaries = [v.name for v in model.variables if v.kind == "B"]
    out.append("Binary")
    if binaries:
        out += _wrap(" " + " ".join(binaries))
    out.append("End")
    sink.write("\n".join(out) + "\n")


def count_lp_rows(text: str) -> int:
    """Number of constraint rows in an LP file written by :func:`export_lp`."""
    n, inside = 0, False
    for line in text.splitlines():
        if line == "Subject To":
            inside = True
        elif line == "Bounds":
            break
        elif inside and line.startswith(" ") and not line.startswith("   "):
            n += 1
    return n


# ---------------------------------------------------------------- substitution

def schedule_values(inst: OfflineInstance, schedule: OfflineSchedule) -> dict[str, float]:
    """Model variable values encoding a schedule (products evaluated exactly)."""
    T, M = inst.max_sequences, inst.machine.num_blocks
    val: dict[str, float] = {}
    for (s, p), t in schedule.seq_start.items():
        val[f"stSeq_{s}_{p}"] = t
    for s in range(1, T + 1):
        for p in range(1, M + 1):
            val.setdefault(f"stSeq_{s}_{p}", 0.0)
    for j, job in enumerate(inst.jobs, 1):
        plan = schedule.plans[job.id]
        ex = "exR" if job.is_rtj else "exB"
        val[f"st_{j}"] = plan.start
        pr = 1.0 if plan.preempted else 0.0
        for pb in inst.placements(job):
            val[f"exPb_{j}_{pb.placement_index}"] = 1.0 if pb == plan.placement else 0.0
        for s in range(1, T + 1):
            for p in range(1, M + 1):
                val[f"{ex}_{j}_{s}_{p}"] = 0.0
                if not job.is_rtj:
                    val[f"exRt_{j}_{s}_{p}"] = 0.0
        for p, slots in plan.slots.items():
            for pos, s in enumerate(slots):
                if s > T:
                    continue
                val[f"{ex}_{j}_{s}_{p}"] = 1.0
                if not job.is_rtj and pos < len(plan.ratios):
                    val[f"exRt_{j}_{s}_{p}"] = plan.ratios[pos]
        if not job.is_rtj:
            val[f"exPrmpt_{j}"] = pr
            val[f"rst_{j}"] = plan.restart if plan.restart is not None else plan.start
            val[f"et_{j}"] = plan.end
            val[f"r1_{j}"] = plan.ratios[0]
            for pb in inst.placements(job):
                val[f"v_{j}_{pb.placement_index}"] = pr * val[f"exPb_{j}_{pb.placement_index}"]
        for s in range(1, T + 1):
            for p in range(1, M + 1):
                x = val[f"{ex}_{j}_{s}_{p}"]
                val[f"zSt_{j}_{s}_{p}"] = plan.start * x
                val[f"zSeq_{j}_{s}_{p}"] = val[f"stSeq_{s}_{p}"] * x
                if job.is_rtj:
                    for pb in inst.placements(job):
                        if p in pb.blocks:
                            val[f"y_{j}_{s}_{p}_{pb.placement_index}"] = x * val[f"exPb_{j}_{pb.placement_index}"]
                else:
                    val[f"zRst_{j}_{s}_{p}"] = val[f"rst_{j}"] * x
                    val[f"zRt_{j}_{s}_{p}"] = val[f"exRt_{j}_{s}_{p}"] * x
                    val[f"w_{j}_{s}_{p}"] = pr * x
                    for pb in inst.placements(job):
                        if p in pb.blocks:
                            val[f"zRtPb_{j}_{s}_{p}_{pb.placement_index}"] = (
                                val[f"exRt_{j}_{s}_{p}"] * val[f"exPb_{j}_{pb.placement_index}"])
    return val


def row_violations(model: ModelExport, values: dict[str, float], tol: float = 1e-6) -> list[str]:
    """Names of rows (and bounds) the assignment violates beyond ``tol``."""
    bad = []
    for v in model.variables:
        x = values.get(v.name)
        if x is None:
            bad.append(f"unset:{v.name}")
        elif x < v.lb - tol or x > v.ub + tol:
            bad.append(f"bound:{v.name}")
    for r in model.rows:
        lhs = sum(c * values.get(v, 0.0) for v, c in r.coeffs.items())
        scale = tol * max(1.0, abs(r.rhs))
        if r.sense == LE and lhs > r.rhs + scale:
            bad.append(r.name)
        elif r.sense == GE and lhs < r.rhs - scale:
            bad.append(r.name)
        elif r.sense == EQ and abs(lhs - r.rhs) > scale:
            bad.append(r.name)
    return bad


def model_objective(model: ModelExport, values: dict[str, float]) -> float:
    return model.objective_constant + sum(c * values.get(v, 0.0) for v, c in model.objective.items())
