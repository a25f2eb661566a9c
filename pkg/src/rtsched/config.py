"""Experiment configuration files.

Grammar, one entry per line::

    # comment
    key = value            # keys are dotted words, e.g. trace.source
    list.key = a, b, c     # comma-separated lists

Blank lines and ``#`` comments are ignored.  A key may appear once.  Values
stay strings here; :func:`experiment_config` converts and validates them.

A single experiment may also be written with ``policy``, ``scheme`` (plus
``sys_interval_s`` / ``app_percent``), ``dsize_gb`` and ``bw_model``.  WCJS
settings take ``wcjs.weights = [w_sd, w_ckpt, w_rem]`` and, with
``wcjs.auto_thresholds = false``, literal ``wcjs.rtj_enter.<category>`` and
``wcjs.bj_protect.<category>`` values.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

from .ckpt import CkptScheme
from .sim.policies import POLICIES
from .wcjs import MIRA_THRESHOLDS, CostWeights, Thresholds
from .workload import Category

KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*$")


class ConfigError(ValueError):
    pass


def parse_config(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if not KEY_RE.match(key):
            raise ConfigError(f"line {lineno}: bad key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = val
    return out


def canonical_text(entries: dict[str, str]) -> str:
    return "".join(f"{k} = {entries[k]}\n" for k in sorted(entries))


def config_hash(entries: dict[str, str]) -> str:
    return hashlib.sha256(canonical_text(entries).encode()).hexdigest()[:16]


def scheme_from_label(label: str, **kw) -> CkptScheme:
    """``no``, ``jit``, ``sys<seconds>``, ``app<percent>`` or ``app@<fraction>``."""
    s = label.strip().lower()
    if s == "no":
        return CkptScheme.no(**kw)
    if s == "jit":
        return CkptScheme.jit(**kw)
    if s.startswith("sys"):
        return CkptScheme.sys(float(s[3:] or 1800), **kw)
    if s.startswith("app@"):
        return CkptScheme.app(app_interval_fraction=float(s[4:]), **kw)
    if s.startswith("app"):
        return CkptScheme.app(float(s[3:] or 5) / 100.0, **kw)
    raise ConfigError(f"unknown checkpoint scheme {label!r}")


KNOWN_KEYS = {
    "trace.source", "trace.format", "trace.procs_per_node", "trace.source_nodes",
    "synthetic.jobs", "synthetic.load", "synthetic.seed",
    "machine.blocks",
    "policies", "schemes", "r_percents", "seeds", "rtj.method", "rtj.external",
    "backfill", "score", "window", "output.dir",
    "weights.slowdown", "weights.ckpt", "weights.remaining",
    "ckpt.dsize_per_node", "ckpt.bandwidth",
    "wcjs.weights", "wcjs.auto_thresholds",
}

# single-experiment spellings; each maps onto one of the keys above
ALIASES = {
    "policy": "policies",
    "dsize_gb": "ckpt.dsize_per_node",
    "bw_model": "ckpt.bandwidth",
}
SCHEME_KEYS = ("scheme", "sys_interval_s", "app_percent")
THRESHOLD_PREFIXES = ("wcjs.rtj_enter.", "wcjs.bj_protect.")


@dataclass(frozen=True)
class ExperimentConfig:
    trace_source: str = "synthetic"
    trace_format: str = "swf"
    procs_per_node: int = 1
    source_nodes: int | None = None
    synthetic_jobs: int = 500
    synthetic_load: float = 0.85
    synthetic_seed: int = 1
    blocks: int | None = None
    policies: tuple[str, ...] = ("baseline", "wcjs")
    schemes: tuple[str, ...] = ("jit",)
    r_percents: tuple[float, ...] = (5.0, 10.0, 15.0, 20.0)
    seeds: tuple[int, ...] = tuple(range(1, 11))
    rtj_method: str = "default"
    rtj_external: str | None = None
    backfill: str = "ff"
    score: str = "fcfs"
    window: tuple[float, float] | None = None
    output_dir: str = "out"
    weights: CostWeights = field(default_factory=CostWeights)
    # literal WCJS thresholds; None derives them from the baseline pass
    thresholds: Thresholds | None = None
    dsize_per_node: float = 4.0
    bandwidth: str = "per_node_min"
    hash: str = ""

    def scheme(self, label: str) -> CkptScheme:
        return scheme_from_label(label, dsize_per_node=self.dsize_per_node, bandwidth_model=self.bandwidth)


def _list(v):
    return tuple(x.strip() for x in v.split(",") if x.strip())


def _resolve_aliases(e: dict[str, str]) -> dict[str, str]:
    out = dict(e)
    for alias, key in ALIASES.items():
        if alias in out:
            if key in out:
                raise ConfigError(f"{alias!r} and {key!r} both given")
            out[key] = out.pop(alias)
    if any(k in out for k in SCHEME_KEYS):
        if "schemes" in out:
            raise ConfigError("'scheme' and 'schemes' both given")
        kind = out.pop("scheme", "").strip().lower()
        interval = out.pop("sys_interval_s", "1800")
        percent = out.pop("app_percent", "5")
        if kind not in ("no", "sys", "app", "jit"):
            raise ConfigError("scheme must be one of no, sys, app, jit")
        out["schemes"] = {"sys": f"sys{interval}", "app": f"app{percent}"}.get(kind, kind)
    return out


def _thresholds(e: dict[str, str]) -> Thresholds | None:
    literal = {k: v for k, v in e.items() if k.startswith(THRESHOLD_PREFIXES)}
    auto = e.get("wcjs.auto_thresholds", "true").strip().lower()
    if auto not in ("true", "false"):
        raise ConfigError("wcjs.auto_thresholds must be true or false")
    if auto == "true":
        if literal:
            raise ConfigError("literal WCJS thresholds need wcjs.auto_thresholds = false")
        return None
    # categories not given keep the published values
    maps = {"rtj_enter": dict(MIRA_THRESHOLDS.rtj_enter), "bj_protect": dict(MIRA_THRESHOLDS.bj_protect)}
    for key, val in literal.items():
        _, name, cat = key.split(".", 2)
        try:
            maps[name][Category(cat)] = float(val)
        except ValueError:
            raise ConfigError(f"bad threshold entry {key} = {val}") from None
    try:
        return Thresholds(maps["rtj_enter"], maps["bj_protect"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _weights(e: dict[str, str]) -> CostWeights:
    if "wcjs.weights" in e:
        if any(k in e for k in ("weights.slowdown", "weights.ckpt", "weights.remaining")):
            raise ConfigError("'wcjs.weights' and 'weights.*' both given")
        parts = [float(x) for x in _list(e["wcjs.weights"].strip("[]"))]
        if len(parts) != 3:
            raise ConfigError("wcjs.weights needs three numbers")
        return CostWeights(*parts)
    return CostWeights(float(e.get("weights.slowdown", 1.0)), float(e.get("weights.ckpt", 1.0)),
                       float(e.get("weights.remaining", 1.0)))


def experiment_config(entries: dict[str, str], overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Typed config from parsed entries; ``overrides`` (e.g. CLI flags) win."""
    e = dict(entries)
    e.update(overrides or {})
    e = _resolve_aliases(e)
    unknown = sorted(k for k in set(e) - KNOWN_KEYS if not k.startswith(THRESHOLD_PREFIXES))
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")
    kw = {}
    try:
        conv = {
            "trace.source": ("trace_source", str),
            "trace.format": ("trace_format", str),
            "trace.procs_per_node": ("procs_per_node", int),
            "trace.source_nodes": ("source_nodes", int),
            "synthetic.jobs": ("synthetic_jobs", int),
            "synthetic.load": ("synthetic_load", float),
            "synthetic.seed": ("synthetic_seed", int),
            "machine.blocks": ("blocks", int),
            "policies": ("policies", _list),
            "schemes": ("schemes", _list),
            "r_percents": ("r_percents", lambda v: tuple(float(x) for x in _list(v))),
            "seeds": ("seeds", lambda v: tuple(int(x) for x in _list(v))),
            "rtj.method": ("rtj_method", str),
            "rtj.external": ("rtj_external", str),
            "backfill": ("backfill", str),
            "score": ("score", str),
            "window": ("window", lambda v: tuple(float(x) for x in _list(v))),
            "output.dir": ("output_dir", str),
            "ckpt.dsize_per_node": ("dsize_per_node", float),
            "ckpt.bandwidth": ("bandwidth", str),
        }
        for key, (name, fn) in conv.items():
            if key in e:
                kw[name] = fn(e[key])
        w = _weights(e)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cfg = ExperimentConfig(weights=w, thresholds=_thresholds(e), hash=config_hash(e), **kw)
    if not cfg.policies or not cfg.schemes or not cfg.r_percents or not cfg.seeds:
        raise ConfigError("policies, schemes, r_percents and seeds must be non-empty")
    if len(set(cfg.seeds)) != len(cfg.seeds):
        raise ConfigError("seeds must be distinct")
    if cfg.window is not None and (len(cfg.window) != 2 or cfg.window[0] >= cfg.window[1]):
        raise ConfigError("window needs two increasing numbers")
    bad = [p for p in cfg.policies if p not in POLICIES]
    if bad:
        raise ConfigError(f"unknown policies: {', '.join(bad)}")
    for label in cfg.schemes:
        cfg.scheme(label)
    return cfg


def load_config(path: str, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    with open(path) as fh:
        return experiment_config(parse_config(fh.read()), overrides)
