"""Command-line entry point: ``rtsched <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, load_config
from .workload import EmptyTraceError, InsufficientJobsError, TraceParseError

log = logging.getLogger("rtsched")


def _overrides(pairs):
    out = {}
    for item in pairs or ():
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = val.strip()
    return out


def cmd_simulate(args) -> int:
    from .experiment import run_experiment

    cfg = load_config(args.config, _overrides(args.set))
    paths = run_experiment(cfg, args.jobs, args.out)
    print(f"wrote {len(paths)} files to {args.out or cfg.output_dir} (config {cfg.hash})")
    return 0


def cmd_compare(args) -> int:
    import os

    from .experiment import compare_csv, compare_formulation, compare_json, compare_summary

    rows = compare_formulation(args.instances, args.bjs, args.rtjs, args.blocks, args.thresh, args.seed,
                               args.budget, args.jobs)
    print(f"{'seed':>5} {'status':>10} {'thresh':>7} {'form_bj':>8} {'form_rtj':>8} "
          f"{'wcjs_bj':>8} {'wcjs_rtj':>8} {'offline_ok':>10}")
    for r in rows:
        print(f"{r.seed:>5} {r.status:>10} {r.thresh:>7.3f} {r.form_bj_sd:>8.3f} {r.form_rtj_sd:>8.3f} "
              f"{r.wcjs_bj_sd:>8.3f} {r.wcjs_rtj_sd:>8.3f} {str(r.wcjs_offline_feasible):>10}")
    s = compare_summary(rows)
    print(f"mean over {s['solved']} solved: formulation BJ {s['formulation_bj_sd']:.3f} "
          f"RTJ {s['formulation_rtj_sd']:.3f}; WCJS BJ {s['wcjs_bj_sd']:.3f} RTJ {s['wcjs_rtj_sd']:.3f}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "compare.csv"), "w") as fh:
            fh.write(compare_csv(rows))
        with open(os.path.join(args.out, "compare.json"), "w") as fh:
            fh.write(compare_json(rows))
    return 0


def cmd_export_lp(args) -> int:
    from .offline import build_model, export_lp, load_instance

    inst = load_instance(args.instance, blocks=args.blocks, T=args.T, sd_thresh=args.thresh)
    model = build_model(inst)
    with open(args.out, "w") as fh:
        export_lp(model, fh)
    print(f"{len(model.rows)} rows, {len(model.variables)} variables ({model.binary_count} binary) -> {args.out}")
    return 0


def cmd_thresholds(args) -> int:
    from .experiment import baseline_pass, load_jobs

    cfg = load_config(args.config, _overrides(args.set))
    jobs, machine, _ = load_jobs(cfg)
    base = baseline_pass(jobs, machine, cfg)
    doc = {"config_hash": cfg.hash, "baseline_medians": base["medians"], "thresholds": base["thresholds"].as_dict()}
    print(json.dumps(doc, indent=1, sort_keys=True))
    return 0


def cmd_validate_trace(args) -> int:
    from .workload import parse_trace

    diag: list[str] = []
    jobs = parse_trace(args.trace, args.format, procs_per_node=args.procs_per_node, diagnostics=diag)
    for d in diag:
        print(d)
    span = jobs[-1].submit_time - jobs[0].submit_time
    print(f"{len(jobs)} jobs, {len(diag)} skipped, submit span {span:g} s, "
          f"largest job {max(j.nodes for j in jobs)} nodes")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rtsched", description="Real-time job scheduling experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run an experiment matrix from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--jobs", type=int, default=1, help="parallel runs")
    s.add_argument("--out", help="output directory (overrides output.dir)")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    s.set_defaults(fn=cmd_simulate)

    c = sub.add_parser("compare", help="exact offline optimum against WCJS on random instances")
    c.add_argument("--instances", type=int, default=20)
    c.add_argument("--bjs", type=int, default=5)
    c.add_argument("--rtjs", type=int, default=2)
    c.add_argument("--blocks", type=int, default=16)
    c.add_argument("--thresh", type=float, default=1.2)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--budget", type=float, default=600.0, help="seconds per exact solve")
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--out")
    c.set_defaults(fn=cmd_compare)

    e = sub.add_parser("export-lp", help="write the offline model of an instance in LP format")
    e.add_argument("--instance", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--blocks", type=int)
    e.add_argument("--T", type=int)
    e.add_argument("--thresh", type=float)
    e.set_defaults(fn=cmd_export_lp)

    t = sub.add_parser("thresholds", help="derive WCJS thresholds from the all-batch baseline")
    t.add_argument("--config", required=True)
    t.add_argument("--set", action="append", metavar="KEY=VALUE")
    t.set_defaults(fn=cmd_thresholds)

    v = sub.add_parser("validate-trace", help="parse a trace and report skipped records")
    v.add_argument("trace")
    v.add_argument("--format", default="swf", choices=("swf", "csv"))
    v.add_argument("--procs-per-node", type=int, default=1)
    v.set_defaults(fn=cmd_validate_trace)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, TraceParseError, EmptyTraceError, InsufficientJobsError, ValueError, OSError) as exc:
        print(f"rtsched: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
