"""Experiment matrix runner and the offline-vs-online comparison harness."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

from .ckpt import BandwidthModel, CkptScheme
from .config import ExperimentConfig
from .machine import MIRA, MachineConfig
from .metrics import SCHEMA_VERSION, aggregate, job_rows, mean, utilization
from .offline import (
    BudgetExceeded,
    Infeasible,
    check_feasible,
    from_outcomes,
    mean_sd,
    random_instance,
    solve_exact,
    threshold_search,
)
from .sim import PolicyConfig, simulate
from .wcjs import MIRA_THRESHOLDS, Thresholds, category_medians, derive_thresholds
from .workload import Kind, middle_window, normalize_sizes, parse_trace, select_rtjs, synthetic_trace


# ---------------------------------------------------------------- protection audit

def audit(sim, thresholds: Thresholds | None = None) -> list[str]:
    """Protection rules every run must satisfy; empty when all hold."""
    bad = []
    for p in sim.preemptions:
        if p.victim_is_rtj:
            bad.append(f"t={p.time}: real-time job {p.victim} was preempted")
        if p.victim_nodes > p.preemptor_nodes:
            bad.append(f"t={p.time}: victim {p.victim} is larger than preemptor {p.preemptor}")
        if thresholds is not None and p.victim_esd > thresholds.bj_protect[p.victim_category] + 1e-9:
            bad.append(f"t={p.time}: victim {p.victim} is above its protection threshold")
        if sim.scheme.variant.value == "jit" and p.redo > 0:
            bad.append(f"t={p.time}: victim {p.victim} lost {p.redo} s under JIT checkpointing")
    return bad


# ---------------------------------------------------------------- experiment matrix

def load_jobs(cfg: ExperimentConfig):
    machine = MIRA if cfg.blocks is None else MachineConfig.reduced(cfg.blocks)
    if cfg.trace_source == "synthetic":
        jobs = synthetic_trace(cfg.synthetic_jobs, cfg.synthetic_load, machine, cfg.synthetic_seed)
    else:
        jobs = parse_trace(cfg.trace_source, cfg.trace_format, procs_per_node=cfg.procs_per_node)
        if cfg.source_nodes:
            jobs = normalize_sizes(jobs, cfg.source_nodes, machine)
    external = None
    if cfg.rtj_external:
        external = parse_trace(cfg.rtj_external, cfg.trace_format, procs_per_node=cfg.procs_per_node)
    return jobs, machine, external


def policy_config(name: str, cfg: ExperimentConfig, thresholds: Thresholds | None) -> PolicyConfig:
    if name == "wcjs":
        return PolicyConfig("wcjs", cfg.backfill, cfg.score, thresholds=thresholds, weights=cfg.weights)
    return PolicyConfig(name, cfg.backfill, cfg.score)


def run_key(policy: str, scheme: str, r: float, seed: int) -> str:
    return f"{policy}__{scheme}__r{r:g}__s{seed}"


@dataclass(frozen=True)
class _RunSpec:
    key: str
    policy: str
    scheme: str
    r_percent: float
    seed: int


def _sds(outcomes, jobs):
    by_id = {j.id: j for j in jobs}
    return {o.job_id: (o.end_time - by_id[o.job_id].submit_time) / by_id[o.job_id].runtime for o in outcomes}


def baseline_pass(jobs, machine, cfg: ExperimentConfig) -> dict:
    """All-batch run used for thresholds and as the comparison point."""
    sim = simulate(jobs, machine, PolicyConfig("baseline", cfg.backfill, cfg.score), CkptScheme.no())
    outcomes = sim.outcomes()
    sds = _sds(outcomes, jobs)
    pairs = [(j.category(machine), sds[j.id]) for j in jobs]
    medians = category_medians(pairs)
    return {
        "outcomes": outcomes,
        "ledger": sim.ledger,
        "sd": sds,
        "medians": {c.value: v for c, v in medians.items()},
        "thresholds": derive_thresholds(medians),
    }


def _report(cfg, machine, jobs, outcomes, ledger, meta) -> tuple[str, dict]:
    if cfg.window is not None:
        outcomes, jobs = middle_window(outcomes, jobs, cfg.window)
    rows = job_rows(outcomes, jobs, machine)
    rep = aggregate(rows)
    rep.utilization = utilization(outcomes, ledger, machine, cfg.window)
    rep.meta = meta
    return rep.to_json(), {"rows": rows, "util": rep.utilization}


def _run_one(args):
    spec, cfg, jobs, machine, external, base_sd, thresholds_doc = args
    thresholds = _thresholds_from_doc(thresholds_doc)
    exp_jobs = select_rtjs(jobs, cfg.rtj_method, spec.r_percent, spec.seed, external)
    sim = simulate(exp_jobs, machine, policy_config(spec.policy, cfg, thresholds), cfg.scheme(spec.scheme))
    outcomes = sim.outcomes()
    violations = audit(sim, thresholds if spec.policy == "wcjs" else None)
    meta = {
        "run": spec.key, "policy": spec.policy, "scheme": spec.scheme, "r_percent": spec.r_percent,
        "seed": spec.seed, "config_hash": cfg.hash, "preemptions": len(sim.preemptions),
        "violations": violations, "thresholds": thresholds_doc,
    }
    text, parts = _report(cfg, machine, exp_jobs, outcomes, sim.ledger, meta)
    rows = parts["rows"]
    rtj = [r.sd for r in rows if r.kind == Kind.REAL_TIME.value]
    bj = [r.sd for r in rows if r.kind == Kind.BATCH.value]
    summary = {
        "run": spec.key, "policy": spec.policy, "scheme": spec.scheme, "r_percent": spec.r_percent,
        "seed": spec.seed, "jobs": len(rows),
        "rtj_mean_sd": mean(rtj), "rtj_median_sd": _median(rtj),
        "bj_mean_sd": mean(bj), "bj_median_sd": _median(bj),
        "bj_mean_bsd": mean(r.bsd for r in rows if r.kind == Kind.BATCH.value),
        "baseline_rtj_mean_sd": mean(base_sd[r.id] for r in rows if r.kind == Kind.REAL_TIME.value
                                     and r.id in base_sd),
        "baseline_bj_mean_sd": mean(base_sd[r.id] for r in rows if r.kind == Kind.BATCH.value and r.id in base_sd),
        "util_overall": parts["util"].overall, "util_productive": parts["util"].productive,
        "preemptions": len(sim.preemptions), "violations": len(violations),
    }
    return spec.key, text, summary


def _median(v):
    v = sorted(v)
    if not v:
        return math.nan
    n = len(v)
    return v[n // 2] if n % 2 else (v[n // 2 - 1] + v[n // 2]) / 2


def _thresholds_from_doc(doc) -> Thresholds:
    from .workload import Category

    return Thresholds({Category(k): v for k, v in doc["rtj_enter"].items()},
                      {Category(k): v for k, v in doc["bj_protect"].items()})


SUMMARY_FIELDS = ["run", "policy", "scheme", "r_percent", "seed", "jobs", "rtj_mean_sd", "rtj_median_sd",
                  "bj_mean_sd", "bj_median_sd", "bj_mean_bsd", "baseline_rtj_mean_sd", "baseline_bj_mean_sd",
                  "util_overall", "util_productive", "preemptions", "violations"]


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def run_experiment(cfg: ExperimentConfig, workers: int = 1, out_dir: str | None = None) -> list[str]:
    """Run the full matrix and write reports; returns the written paths.

    Outputs: ``baseline.json``, one ``runs/<key>.json`` per run and
    ``aggregate.csv`` with one row per run sorted by key.
    """
    out = out_dir or cfg.output_dir
    os.makedirs(os.path.join(out, "runs"), exist_ok=True)
    jobs, machine, external = load_jobs(cfg)
    base = baseline_pass(jobs, machine, cfg)
    th_doc = (cfg.thresholds or base["thresholds"]).as_dict()
    meta = {"run": "baseline", "config_hash": cfg.hash, "baseline_medians": base["medians"], "thresholds": th_doc}
    text, _ = _report(cfg, machine, jobs, base["outcomes"], base["ledger"], meta)
    paths = [os.path.join(out, "baseline.json")]
    with open(paths[0], "w") as fh:
        fh.write(text)

    specs = sorted(
        (_RunSpec(run_key(p, s, r, seed), p, s, r, seed)
         for p in cfg.policies for s in cfg.schemes for r in cfg.r_percents for seed in cfg.seeds),
        key=lambda x: x.key,
    )
    args = [(sp, cfg, jobs, machine, external, base["sd"], th_doc) for sp in specs]
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, args))
    else:
        results = [_run_one(a) for a in args]
    results.sort(key=lambda r: r[0])
    summaries = []
    for key, text, summary in results:
        path = os.path.join(out, "runs", f"{key}.json")
        with open(path, "w") as fh:
            fh.write(text)
        paths.append(path)
        summaries.append(summary)
    agg = os.path.join(out, "aggregate.csv")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    for s in summaries:
        w.writerow([_fmt(s[f]) for f in SUMMARY_FIELDS])
    with open(agg, "w") as fh:
        fh.write(buf.getvalue())
    paths.append(agg)
    return paths


# ---------------------------------------------------------------- formulation comparison

def compare_scheme(machine: MachineConfig) -> CkptScheme:
    """JIT checkpointing whose write and read times equal the offline overhead."""
    return CkptScheme.jit(dsize_per_node=machine.mem_per_node, bandwidth_model=BandwidthModel.PFS_CAP)


@dataclass
class CompareRow:
    seed: int
    status: str            # optimal, looser, budget, infeasible
    thresh: float
    form_bj_sd: float
    form_rtj_sd: float
    wcjs_bj_sd: float
    wcjs_rtj_sd: float
    wcjs_offline_feasible: bool
    wcjs_problems: str

    @property
    def gap(self) -> float:
        if not math.isfinite(self.form_bj_sd) or self.form_bj_sd == 0:
            return math.nan
        return (self.wcjs_bj_sd - self.form_bj_sd) / self.form_bj_sd


def _compare_one(args):
    seed, n_bj, n_rtj, blocks, thresh, budget, thresholds = args
    inst = random_instance(seed, n_bj, n_rtj, blocks, thresh)
    status, used = "optimal", thresh
    try:
        sol = solve_exact(inst, budget)
    except Infeasible:
        try:
            used, sol = threshold_search(inst, thresh, max(2.0, thresh + 0.1), 0.01, budget)
            status = "looser"
        except Infeasible:
            sol, status = None, "infeasible"
        except BudgetExceeded as exc:
            sol, status = exc.incumbent, "budget"
    except BudgetExceeded as exc:
        sol, status = exc.incumbent, "budget"
    form_bj = sol.objective if sol else math.nan
    form_rtj = sol.rtj_sd if sol else math.nan

    sim = simulate(inst.jobs, inst.machine, PolicyConfig("wcjs", thresholds=thresholds), compare_scheme(inst.machine))
    sched, problems = from_outcomes(inst, sim.outcomes())
    violations = [str(v) for v in check_feasible(inst, sched)] if sched else []
    issues = problems + violations
    return CompareRow(seed, status, used, form_bj, form_rtj, mean_sd(inst, sched, Kind.BATCH),
                      mean_sd(inst, sched, Kind.REAL_TIME), not issues, "; ".join(issues))


def compare_formulation(instances: int = 20, n_bj: int = 5, n_rtj: int = 2, blocks: int = 16,
                        thresh: float = 1.2, seed: int = 0, budget: float | None = 600.0,
                        workers: int = 1, thresholds: Thresholds | None = None) -> list[CompareRow]:
    """Exact offline optimum against WCJS with JIT checkpointing on seeded random instances."""
    thresholds = thresholds or MIRA_THRESHOLDS
    args = [(seed + k, n_bj, n_rtj, blocks, thresh, budget, thresholds) for k in range(instances)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_compare_one, args))
    return [_compare_one(a) for a in args]


def compare_summary(rows: list[CompareRow]) -> dict[str, float]:
    solved = [r for r in rows if math.isfinite(r.form_bj_sd)]
    return {
        "instances": len(rows),
        "solved": len(solved),
        "formulation_bj_sd": mean(r.form_bj_sd for r in solved),
        "formulation_rtj_sd": mean(r.form_rtj_sd for r in solved),
        "wcjs_bj_sd": mean(r.wcjs_bj_sd for r in solved),
        "wcjs_rtj_sd": mean(r.wcjs_rtj_sd for r in solved),
    }


def compare_csv(rows: list[CompareRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    fields = ["seed", "status", "thresh", "form_bj_sd", "form_rtj_sd", "wcjs_bj_sd", "wcjs_rtj_sd",
              "wcjs_offline_feasible", "gap", "wcjs_problems"]
    w.writerow(fields)
    for r in rows:
        d = asdict(r)
        d["gap"] = r.gap
        w.writerow([_fmt(d[f]) for f in fields])
    return buf.getvalue()


def compare_json(rows: list[CompareRow]) -> str:
    doc = {"schema_version": SCHEMA_VERSION, "summary": compare_summary(rows),
           "instances": [dict(asdict(r), gap=r.gap) for r in rows]}
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"
